"""Synthetic multi-label bench: prototype-plus-noise dataset generator, a
residual patch encoder with a learnable label-embedding table, an adaptive
classification head, and a deterministic Adam training loop.

Every training-time quantity is built once as a reverse-mode graph (see
autodiff); plain-array views of the same forward pass feed the library-level
transport and loss functions.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .distributions import (
    DiscretePointSet,
    as_label_vector,
    build_beta,
    build_theta,
    default_top_k,
    make_point_set,
    normalized_labels,
)
from .errors import ConfigError, NumericalError, ParseError, ShapeError
from .losses import PROB_CLAMP, LossConfig, loss_gradients, warmup_gradients
from .metrics import map_score
from .numerics import as_matrix, top_k_mask
from .transport import NavigatorParams, backward_plan

BACKGROUND = -1

DATASET_FORMAT = "ctalign.dataset.v1"
CHECKPOINT_FORMAT = "ctalign.checkpoint.v1"


# ---------------------------------------------------------------------------
# synthetic data


@dataclass(frozen=True)
class SyntheticSample:
    """One bag of patch columns with its multi-hot labels.

    assignment[i] is the owning label index of patch i, or BACKGROUND (-1)
    for pure-noise patches.
    """

    patches: np.ndarray
    y: np.ndarray
    assignment: np.ndarray


def generate_dataset(
    n_labels: int,
    feature_dim: int,
    n_patches: int,
    n_samples: int,
    noise_sigma: float,
    seed: int,
    max_label_count: int = 3,
    min_patches_per_label: int = 2,
    max_patches_per_label: int = 4,
) -> list[SyntheticSample]:
    """Draw a dataset of prototype-plus-noise patch bags.

    Each sample carries 1..max_label_count distinct labels; every positive
    label owns min..max patches (prototype plus Gaussian(0, sigma^2) noise,
    capped so the bag always fits) and the remaining patches are pure noise
    at unit expected norm. The whole draw restarts until every label appears
    at least once, so coverage is a function of the seed alone.
    """
    if n_labels < 2:
        raise ConfigError(f"need at least 2 labels, got {n_labels}")
    if n_patches < n_labels:
        raise ConfigError(f"need n_patches >= n_labels, got {n_patches} < {n_labels}")
    if n_samples < 1:
        raise ConfigError("need at least one sample")
    if noise_sigma < 0:
        raise ConfigError("noise_sigma must be nonnegative")
    max_card = min(max_label_count, n_labels)
    if n_patches < max_card:
        raise ConfigError("not enough patches for the maximum label count")
    if n_samples * max_card < n_labels:
        raise ConfigError("label coverage is impossible at this dataset size")

    rng = np.random.default_rng(seed)
    if n_labels < feature_dim:
        # random orthonormal frame: unit-norm prototypes with zero cross-talk,
        # plus a basis for the complement so background noise never aliases an
        # object signature (keeps bags identifiable at sigma ~ 0.3)
        frame, _ = np.linalg.qr(rng.normal(size=(feature_dim, feature_dim)))
        protos = frame[:, :n_labels]
        bg_basis = frame[:, n_labels:]
    else:
        protos = rng.normal(size=(feature_dim, n_labels))
        protos /= np.sqrt((protos * protos).sum(axis=0, keepdims=True))
        bg_basis = None
    bg_scale = 1.0 / math.sqrt(feature_dim)

    for _ in range(50):
        samples = []
        seen = np.zeros(n_labels, dtype=bool)
        for _ in range(n_samples):
            card = int(rng.integers(1, max_card + 1))
            labels = np.sort(rng.choice(n_labels, size=card, replace=False))
            per_label_cap = max(1, min(max_patches_per_label, n_patches // card))
            per_label_floor = min(min_patches_per_label, per_label_cap)
            counts = rng.integers(per_label_floor, per_label_cap + 1, size=card)
            positions = rng.permutation(n_patches)
            patches = np.empty((feature_dim, n_patches))
            assignment = np.full(n_patches, BACKGROUND, dtype=np.int64)
            cursor = 0
            for lab, cnt in zip(labels, counts):
                for pos in positions[cursor : cursor + cnt]:
                    assignment[pos] = lab
                    patches[:, pos] = protos[:, lab] + rng.normal(
                        0.0, noise_sigma, feature_dim
                    )
                cursor += cnt
            for pos in positions[cursor:]:
                if bg_basis is not None:
                    k_bg = bg_basis.shape[1]
                    coeffs = rng.normal(0.0, 1.0 / math.sqrt(k_bg), k_bg)
                    patches[:, pos] = bg_basis @ coeffs
                else:
                    patches[:, pos] = rng.normal(0.0, bg_scale, feature_dim)
            y = np.zeros(n_labels, dtype=np.int64)
            y[labels] = 1
            seen[labels] = True
            samples.append(SyntheticSample(patches, y, assignment))
        if seen.all():
            return samples
    raise ConfigError("label coverage not reached; dataset too small for n_labels")


# ---------------------------------------------------------------------------
# parameters


@dataclass
class LayerParams:
    weight: np.ndarray
    bias: np.ndarray


@dataclass
class HeadParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


@dataclass
class ToyModelParams:
    encoder_layers: list[LayerParams]
    label_table: np.ndarray
    label_layers: list[LayerParams]
    head: HeadParams
    navigator: NavigatorParams

    @property
    def dim(self) -> int:
        return self.label_table.shape[0]

    @property
    def n_labels(self) -> int:
        return self.label_table.shape[1]

    @property
    def depth(self) -> int:
        return len(self.encoder_layers)


def init_params(
    n_labels: int,
    dim: int,
    depth: int = 3,
    head_hidden: int | None = None,
    seed: int = 0,
    block_scale: float = 0.25,
    nav_projection_dim: int | None = None,
) -> ToyModelParams:
    """Random init. Residual blocks start as small perturbations of identity
    and the head correction starts at the zero map, so the initial forward
    pass is close to mean pooling of the raw patches."""
    if n_labels < 1 or dim < 1 or depth < 1:
        raise ConfigError("n_labels, dim, and depth must be positive")
    rng = np.random.default_rng(seed)
    hh = head_hidden or dim
    scale = block_scale / math.sqrt(dim)

    def block() -> LayerParams:
        return LayerParams(rng.normal(0.0, scale, (dim, dim)), np.zeros((dim, 1)))

    encoder = [block() for _ in range(depth)]
    table = rng.normal(0.0, 1.0 / math.sqrt(dim), (dim, n_labels))
    # label transforms start as exact identities: the table is the embedding
    # until the trunk learns per-layer refinements
    label_layers = [
        LayerParams(np.zeros((dim, dim)), np.zeros((dim, 1))) for _ in range(depth)
    ]
    head = HeadParams(
        w1=rng.normal(0.0, 1.0 / math.sqrt(dim), (hh, dim)),
        b1=np.zeros((hh, 1)),
        w2=np.zeros((dim, hh)),
        b2=np.zeros((dim, 1)),
    )
    nav = NavigatorParams()
    if nav_projection_dim is not None:
        pscale = 1.0 / math.sqrt(dim)
        nav = NavigatorParams(
            proj_patch=rng.normal(0.0, pscale, (nav_projection_dim, dim)),
            proj_label=rng.normal(0.0, pscale, (nav_projection_dim, dim)),
        )
    return ToyModelParams(encoder, table, label_layers, head, nav)


def parameter_arrays(params: ToyModelParams) -> dict[str, np.ndarray]:
    """Live views of every learnable array, in a fixed key order."""
    out: dict[str, np.ndarray] = {}
    for i, layer in enumerate(params.encoder_layers):
        out[f"encoder.{i}.weight"] = layer.weight
        out[f"encoder.{i}.bias"] = layer.bias
    out["label.table"] = params.label_table
    for i, layer in enumerate(params.label_layers):
        out[f"label.{i}.weight"] = layer.weight
        out[f"label.{i}.bias"] = layer.bias
    out["head.w1"] = params.head.w1
    out["head.b1"] = params.head.b1
    out["head.w2"] = params.head.w2
    out["head.b2"] = params.head.b2
    out["navigator.log_temperature"] = params.navigator.log_temperature
    if params.navigator.proj_patch is not None:
        out["navigator.proj_patch"] = params.navigator.proj_patch
        out["navigator.proj_label"] = params.navigator.proj_label
    return out


def parameter_tensors(params: ToyModelParams) -> dict[str, ad.Tensor]:
    return {name: ad.Tensor(arr) for name, arr in parameter_arrays(params).items()}


def flatten_parameters(params: ToyModelParams) -> np.ndarray:
    return np.concatenate([a.ravel() for a in parameter_arrays(params).values()])


def assign_parameters(params: ToyModelParams, vector) -> None:
    """Write a flat vector back into the live parameter arrays."""
    vec = np.asarray(vector, dtype=np.float64)
    arrays = parameter_arrays(params)
    total = sum(a.size for a in arrays.values())
    if vec.size != total:
        raise ShapeError(f"expected {total} parameters, got {vec.size}")
    offset = 0
    for arr in arrays.values():
        arr[...] = vec[offset : offset + arr.size].reshape(arr.shape)
        offset += arr.size


# ---------------------------------------------------------------------------
# forward graph


@dataclass
class _Graph:
    patch_layers: list[ad.Tensor]
    label_layers: list[ad.Tensor]
    thetas: list[ad.Tensor] | None
    theta_logits: list[ad.Tensor] | None
    beta: np.ndarray | None
    feature: ad.Tensor
    probs: ad.Tensor


def _normalize_columns(t: ad.Tensor, radius: float) -> ad.Tensor:
    # every embedding lives on a sphere of radius sqrt(dim): without the bound
    # the transport term zeroes itself by inflating one norm (a single patch,
    # or the label table) until the patch weights go one-hot; with radius 1
    # the inner products are too small for confident logits or sharp weights
    norms = ad.sqrt(ad.tsum(t * t, axis=0, keepdims=True))
    return t * (radius / norms)


def _orthonormal_columns(t: ad.Tensor, radius: float) -> ad.Tensor:
    # label embeddings are kept mutually orthogonal (modified Gram-Schmidt,
    # scaled to the shared radius): a purely attractive transport cost always
    # has its global minimum at "every label on one ray", and once the label
    # frame degenerates the class logits cannot be told apart; orthogonality
    # removes that basin while leaving the frame free to rotate
    d, m = t.value.shape
    if m > d:
        return _normalize_columns(t, radius)
    units: list[ad.Tensor] = []
    out: ad.Tensor | None = None
    for j in range(m):
        pick = np.zeros((m, 1))
        pick[j, 0] = 1.0
        v = t @ ad.Tensor(pick)
        for u in units:
            v = v - u @ (ad.transpose(u) @ v)
        v = v / ad.sqrt(ad.tsum(v * v, axis=0, keepdims=True))
        units.append(v)
        col = (radius * v) @ ad.Tensor(pick.T)
        out = col if out is None else out + col
    return out


def _forward_graph(
    tensors: dict[str, ad.Tensor],
    params: ToyModelParams,
    patches,
    y,
    top_k: int | None,
    beta_mode: str,
    topk_mode: str,
) -> _Graph:
    patches = as_matrix(patches, "patches")
    if patches.shape[0] != params.dim:
        raise ShapeError(
            f"patches have dimension {patches.shape[0]}, model expects {params.dim}"
        )
    n = patches.shape[1]

    radius = math.sqrt(params.dim)
    x = ad.Tensor(patches)
    patch_layers = []
    for i in range(params.depth):
        w, b = tensors[f"encoder.{i}.weight"], tensors[f"encoder.{i}.bias"]
        x = _normalize_columns(x + ad.gelu(w @ x + b), radius)
        patch_layers.append(x)

    t = tensors["label.table"]
    label_layers = []
    for i in range(params.depth):
        w, b = tensors[f"label.{i}.weight"], tensors[f"label.{i}.bias"]
        t = _orthonormal_columns(t + ad.gelu(w @ t + b), radius)
        label_layers.append(t)

    thetas = theta_logits = None
    beta = None
    if y is not None:
        yv = as_label_vector(y)
        if yv.size != params.n_labels:
            raise ShapeError(f"{yv.size} labels but model has {params.n_labels}")
        beta = build_beta(y, beta_mode)
        k = top_k if top_k is not None else default_top_k(n)
        if k < 1:
            raise ConfigError(f"top_k must be >= 1, got {k}")
        yhat = ad.Tensor(normalized_labels(y).reshape(-1, 1))
        thetas, theta_logits = [], []
        for e_l, l_l in zip(patch_layers, label_layers):
            score = e_l.T @ (l_l @ yhat)  # (n, 1)
            if topk_mode == "sparse":
                masked = top_k_mask(score.value.ravel(), k)
                offsets = np.where(np.isneginf(masked), -np.inf, 0.0).reshape(-1, 1)
                logits = score + offsets
                ez = ad.exp(logits - logits.value.max())
                theta = ez / ad.tsum(ez, axis=0, keepdims=True)
            elif topk_mode == "binary":
                # rank indicator: piecewise constant in the parameters
                tv = build_theta(e_l.value, l_l.value, y, k, "binary")
                theta = ad.Tensor(tv.reshape(-1, 1))
                logits = ad.Tensor(np.log(tv).reshape(-1, 1))
            else:
                raise ConfigError(f"unknown topk_mode {topk_mode!r}")
            thetas.append(theta)
            theta_logits.append(logits)

    e_cls = ad.tsum(patch_layers[-1], axis=1, keepdims=True) * (1.0 / n)
    hidden = ad.gelu(tensors["head.w1"] @ e_cls + tensors["head.b1"])
    feature = e_cls + (tensors["head.w2"] @ hidden + tensors["head.b2"])
    probs = ad.sigmoid(label_layers[-1].T @ feature)
    return _Graph(patch_layers, label_layers, thetas, theta_logits, beta, feature, probs)


def _cosine_graph(a: ad.Tensor, b: ad.Tensor) -> ad.Tensor:
    na = ad.sqrt(ad.tsum(a * a, axis=0, keepdims=True))
    nb = ad.sqrt(ad.tsum(b * b, axis=0, keepdims=True))
    return ad.transpose(a / na) @ (b / nb)


def _ct_graph(
    graph: _Graph,
    tensors: dict[str, ad.Tensor],
    params: ToyModelParams,
    start_layer: int,
) -> ad.Tensor:
    """Layer-wise bidirectional transport cost as one differentiable scalar.

    The backward plan's source weighting reuses the raw top-k score logits:
    the normalizer of theta cancels inside the column softmax, which keeps
    exact zeros out of the log.
    """
    beta = graph.beta
    with np.errstate(divide="ignore"):
        log_beta_row = np.log(beta)[None, :]
    beta_row = beta[None, :]
    inv_tau = ad.exp(-tensors["navigator.log_temperature"])
    projected = params.navigator.proj_patch is not None

    terms = []
    for idx in range(start_layer - 1, params.depth):
        e_l, l_l = graph.patch_layers[idx], graph.label_layers[idx]
        cost = 1.0 - _cosine_graph(e_l, l_l)
        if projected:
            pe = tensors["navigator.proj_patch"] @ e_l
            pl = tensors["navigator.proj_label"] @ l_l
            nav_base = 1.0 - _cosine_graph(pe, pl)
        else:
            nav_base = cost
        d = nav_base * inv_tau

        zf = ad.sub(ad.Tensor(log_beta_row), d)
        ef = ad.exp(zf - zf.value.max(axis=1, keepdims=True))
        rows = ef / ad.tsum(ef, axis=1, keepdims=True)
        forward_cost = ad.tsum(graph.thetas[idx] * rows * cost)

        zb = ad.sub(graph.theta_logits[idx], d)
        eb = ad.exp(zb - zb.value.max(axis=0, keepdims=True))
        cols = eb / ad.tsum(eb, axis=0, keepdims=True)
        backward_cost = ad.tsum(cols * beta_row * cost)

        terms.append(forward_cost + backward_cost)
    acc = terms[0]
    for term in terms[1:]:
        acc = acc + term
    return acc


def _asl_graph(probs: ad.Tensor, y, cfg: LossConfig) -> ad.Tensor:
    yv = as_label_vector(y).astype(np.float64).reshape(-1, 1)
    p = ad.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    pos = ad.log(p)
    if cfg.gamma_plus != 0.0:
        pos = ad.pow_const(1.0 - p, cfg.gamma_plus) * pos
    neg = ad.log(1.0 - p)
    if cfg.gamma_minus != 0.0:
        neg = ad.pow_const(p, cfg.gamma_minus) * neg
    return -ad.tsum(yv * pos + (1.0 - yv) * neg) * (1.0 / yv.size)


def batch_objective(
    tensors: dict[str, ad.Tensor],
    params: ToyModelParams,
    batch,
    cfg: LossConfig,
    top_k: int | None = None,
    beta_mode: str = "masked",
    topk_mode: str = "sparse",
) -> tuple[ad.Tensor, ad.Tensor, ad.Tensor]:
    """Batch-mean combined loss as a graph root, plus component roots.

    Returns (total, lct, asl) nodes with total = alpha*lct + asl assembled
    from the shared per-sample graphs, so the additivity contract holds
    exactly and either component can be differentiated on its own.
    """
    if not batch:
        raise ConfigError("empty batch")
    if not 1 <= cfg.start_layer <= params.depth:
        raise ConfigError(f"start_layer {cfg.start_layer} outside 1..{params.depth}")
    lct_terms = []
    asl_terms = []
    for sample in batch:
        graph = _forward_graph(
            tensors, params, sample.patches, sample.y, top_k, beta_mode, topk_mode
        )
        lct_terms.append(_ct_graph(graph, tensors, params, cfg.start_layer))
        asl_terms.append(_asl_graph(graph.probs, sample.y, cfg))

    def mean_node(terms: list[ad.Tensor]) -> ad.Tensor:
        acc = terms[0]
        for t in terms[1:]:
            acc = acc + t
        return acc * (1.0 / len(terms))

    lct = mean_node(lct_terms)
    asl = mean_node(asl_terms)
    total = cfg.alpha * lct + asl
    return total, lct, asl


def batch_loss_value(
    params: ToyModelParams,
    batch,
    cfg: LossConfig,
    top_k: int | None = None,
    beta_mode: str = "masked",
    topk_mode: str = "sparse",
) -> float:
    """Value of the batch objective; the probe function for gradient checks."""
    total, _lct, _asl = batch_objective(
        parameter_tensors(params), params, batch, cfg, top_k, beta_mode, topk_mode
    )
    return float(total.value)


# ---------------------------------------------------------------------------
# encode / predict


@dataclass
class EncodeResult:
    per_layer_patches: list[DiscretePointSet]
    per_layer_labels: list[DiscretePointSet]
    global_feature: np.ndarray
    probabilities: np.ndarray
    navigator: NavigatorParams


def encode(
    params: ToyModelParams,
    sample,
    top_k: int | None = None,
    beta_mode: str = "masked",
    topk_mode: str = "sparse",
) -> EncodeResult:
    """Training-style forward pass on one labeled sample.

    Returns per-layer patch point sets (label-guided weights) and label point
    sets (ground-truth weights) together with the pooled feature and head
    probabilities.
    """
    graph = _forward_graph(
        parameter_tensors(params),
        params,
        sample.patches,
        sample.y,
        top_k,
        beta_mode,
        topk_mode,
    )
    per_layer_patches = [
        make_point_set(e.value, th.value.ravel())
        for e, th in zip(graph.patch_layers, graph.thetas)
    ]
    per_layer_labels = [
        make_point_set(l.value, graph.beta) for l in graph.label_layers
    ]
    return EncodeResult(
        per_layer_patches=per_layer_patches,
        per_layer_labels=per_layer_labels,
        global_feature=graph.feature.value.ravel().copy(),
        probabilities=graph.probs.value.ravel().copy(),
        navigator=params.navigator,
    )


def predict(params: ToyModelParams, patches, k_eval: int | None = None) -> np.ndarray:
    """Class probabilities for an unlabeled patch bag.

    The head path never consumes labels, so k_eval does not influence the
    probabilities; it is forwarded only when diagnostic point sets are built
    separately (see inference_point_sets).
    """
    graph = _forward_graph(
        parameter_tensors(params), params, patches, None, k_eval, "masked", "sparse"
    )
    return graph.probs.value.ravel().copy()


def inference_point_sets(
    params: ToyModelParams, patches
) -> tuple[list[DiscretePointSet], list[DiscretePointSet]]:
    """Per-layer point sets for label-free diagnostics: uniform weights on
    both sides, since the label-guided weighting needs ground truth."""
    graph = _forward_graph(
        parameter_tensors(params), params, patches, None, None, "masked", "sparse"
    )
    n = graph.patch_layers[0].value.shape[1]
    m = params.n_labels
    u_n = np.full(n, 1.0 / n)
    u_m = np.full(m, 1.0 / m)
    return (
        [make_point_set(e.value, u_n) for e in graph.patch_layers],
        [make_point_set(l.value, u_m) for l in graph.label_layers],
    )


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    epochs: int = 30
    batch_size: int = 10
    seed: int = 42
    top_k: int | None = None
    beta_mode: str = "masked"
    topk_mode: str = "sparse"
    # transport weight is held at zero for this many leading epochs, the
    # stand-in for the pretrained encoders the alignment loss assumes: from
    # a random init its gradient is ~30x the classification gradient and
    # drags every embedding onto one ray before the classes can separate
    lct_warmup_epochs: int = 10
    loss: LossConfig = field(default_factory=LossConfig)


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    total: float
    lct: float
    asl: float
    val_map: float


@dataclass
class TrainResult:
    params: ToyModelParams
    trace: list[EpochStats]


def train(
    params: ToyModelParams,
    train_samples,
    cfg: TrainConfig,
    val_samples=None,
) -> TrainResult:
    """Adam on the batch-mean combined loss; updates params in place.

    Batch order is reshuffled each epoch from cfg.seed, so two runs from the
    same init and seed replay bit-for-bit. A non-finite gradient aborts with
    the offending epoch in the message. The trace records the objective each
    epoch actually minimized (warmup epochs run with transport weight zero).
    """
    if not train_samples:
        raise ConfigError("empty training set")
    if cfg.epochs < 1 or cfg.batch_size < 1:
        raise ConfigError("epochs and batch_size must be >= 1")
    if cfg.lct_warmup_epochs < 0:
        raise ConfigError("lct_warmup_epochs must be >= 0")
    arrays = parameter_arrays(params)
    m_state = {k: np.zeros_like(v) for k, v in arrays.items()}
    v_state = {k: np.zeros_like(v) for k, v in arrays.items()}
    rng = np.random.default_rng(cfg.seed)
    n = len(train_samples)
    bs = min(cfg.batch_size, n)
    step = 0
    trace: list[EpochStats] = []
    for epoch in range(1, cfg.epochs + 1):
        grad_fn = (
            warmup_gradients if epoch <= cfg.lct_warmup_epochs else loss_gradients
        )
        order = rng.permutation(n)
        total_sum = lct_sum = asl_sum = 0.0
        for start in range(0, n, bs):
            batch = [train_samples[i] for i in order[start : start + bs]]
            try:
                bundle = grad_fn(
                    params,
                    batch,
                    cfg.loss,
                    top_k=cfg.top_k,
                    beta_mode=cfg.beta_mode,
                    topk_mode=cfg.topk_mode,
                )
            except NumericalError as err:
                raise NumericalError(f"epoch {epoch}: {err}") from err
            step += 1
            bc1 = 1.0 - cfg.beta1**step
            bc2 = 1.0 - cfg.beta2**step
            for name, arr in arrays.items():
                g = bundle.partials[name]
                m_state[name] = cfg.beta1 * m_state[name] + (1.0 - cfg.beta1) * g
                v_state[name] = cfg.beta2 * v_state[name] + (1.0 - cfg.beta2) * (g * g)
                arr -= cfg.learning_rate * (m_state[name] / bc1) / (
                    np.sqrt(v_state[name] / bc2) + cfg.adam_epsilon
                )
            weight = len(batch)
            total_sum += bundle.total * weight
            lct_sum += bundle.lct * weight
            asl_sum += bundle.asl * weight
        val_map = math.nan
        if val_samples:
            scores = np.stack([predict(params, s.patches) for s in val_samples])
            labels = np.stack([s.y for s in val_samples])
            val_map = map_score(scores, labels)
        trace.append(
            EpochStats(epoch, total_sum / n, lct_sum / n, asl_sum / n, val_map)
        )
    return TrainResult(params=params, trace=trace)


# ---------------------------------------------------------------------------
# diagnostics


@dataclass(frozen=True)
class LocalizationReport:
    fraction: float
    n_localized: int
    n_correct: int
    n_total: int


def localization_report(
    params: ToyModelParams,
    samples,
    top_k: int | None = None,
    prob_threshold: float = 0.5,
    mass_threshold: float = 0.5,
    beta_mode: str = "masked",
    topk_mode: str = "sparse",
) -> LocalizationReport:
    """How often the final-layer backward plan finds the true patches.

    A sample counts as correctly classified when thresholded probabilities
    reproduce its label set exactly; it counts as localized when, for every
    true label, at least mass_threshold of that label's backward-plan column
    sits on the patches the generator assigned to it.
    """
    samples = list(samples)
    n_correct = 0
    n_localized = 0
    for sample in samples:
        probs = predict(params, sample.patches)
        if not np.array_equal((probs > prob_threshold).astype(np.int64), sample.y):
            continue
        n_correct += 1
        enc = encode(params, sample, top_k=top_k, beta_mode=beta_mode, topk_mode=topk_mode)
        plan = backward_plan(
            enc.per_layer_patches[-1], enc.per_layer_labels[-1], params.navigator
        )
        localized = True
        for j in np.flatnonzero(sample.y):
            column = plan.coupling[:, j]
            total = column.sum()
            if total <= 0 or column[sample.assignment == j].sum() / total < mass_threshold:
                localized = False
                break
        n_localized += localized
    fraction = n_localized / n_correct if n_correct else 0.0
    return LocalizationReport(fraction, n_localized, n_correct, len(samples))


# ---------------------------------------------------------------------------
# serialization


def _array_payload(arr: np.ndarray) -> dict:
    return {"shape": list(arr.shape), "data": [float(v) for v in arr.ravel()]}


def _array_from_payload(obj, name: str) -> np.ndarray:
    try:
        shape = obj["shape"]
        data = obj["data"]
    except (TypeError, KeyError) as err:
        raise ParseError(f"array {name!r} needs 'shape' and 'data'") from err
    arr = np.asarray(data, dtype=np.float64)
    if arr.size != int(np.prod(shape)):
        raise ParseError(f"array {name!r} has {arr.size} values for shape {shape}")
    return arr.reshape(shape)


def _load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as err:
        raise ParseError(f"{path}: invalid JSON at line {err.lineno}") from err
    except OSError as err:
        raise ParseError(f"{path}: {err}") from err


def save_dataset(samples, path, meta: dict | None = None) -> None:
    first = samples[0]
    payload = {
        "format": DATASET_FORMAT,
        "meta": {
            "n_labels": int(first.y.size),
            "feature_dim": int(first.patches.shape[0]),
            "n_patches": int(first.patches.shape[1]),
            "count": len(samples),
            **(meta or {}),
        },
        "samples": [
            {
                "patches": [float(v) for v in s.patches.ravel()],
                "y": [int(v) for v in s.y],
                "assignment": [int(v) for v in s.assignment],
            }
            for s in samples
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, separators=(",", ":"))


def load_dataset(path) -> list[SyntheticSample]:
    payload = _load_json(path)
    if payload.get("format") != DATASET_FORMAT:
        raise ParseError(f"{path}: not a dataset file")
    try:
        meta = payload["meta"]
        d, n = int(meta["feature_dim"]), int(meta["n_patches"])
        raw = payload["samples"]
    except (KeyError, TypeError, ValueError) as err:
        raise ParseError(f"{path}: missing dataset fields ({err})") from err
    samples = []
    for i, item in enumerate(raw):
        try:
            patches = np.asarray(item["patches"], dtype=np.float64).reshape(d, n)
            y = np.asarray(item["y"], dtype=np.int64)
            assignment = np.asarray(item["assignment"], dtype=np.int64)
        except (KeyError, TypeError, ValueError) as err:
            raise ParseError(f"{path}: bad sample {i} ({err})") from err
        samples.append(SyntheticSample(patches, y, assignment))
    return samples


def save_checkpoint(params: ToyModelParams, path, extra: dict | None = None) -> None:
    nav = params.navigator
    payload = {
        "format": CHECKPOINT_FORMAT,
        "arch": {
            "dim": params.dim,
            "n_labels": params.n_labels,
            "depth": params.depth,
            "head_hidden": int(params.head.w1.shape[0]),
            "nav_projection_dim": (
                None if nav.proj_patch is None else int(nav.proj_patch.shape[0])
            ),
        },
        "params": {
            name: _array_payload(arr) for name, arr in parameter_arrays(params).items()
        },
        "extra": extra or {},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, separators=(",", ":"))


def load_checkpoint(path) -> tuple[ToyModelParams, dict]:
    payload = _load_json(path)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ParseError(f"{path}: not a checkpoint file")
    try:
        arch = payload["arch"]
        params = init_params(
            n_labels=int(arch["n_labels"]),
            dim=int(arch["dim"]),
            depth=int(arch["depth"]),
            head_hidden=int(arch["head_hidden"]),
            nav_projection_dim=(
                None
                if arch.get("nav_projection_dim") is None
                else int(arch["nav_projection_dim"])
            ),
        )
        stored = payload["params"]
    except (KeyError, TypeError, ValueError) as err:
        raise ParseError(f"{path}: missing checkpoint fields ({err})") from err
    arrays = parameter_arrays(params)
    if set(stored) != set(arrays):
        raise ParseError(f"{path}: parameter names do not match the architecture")
    for name, arr in arrays.items():
        loaded = _array_from_payload(stored[name], name)
        if loaded.shape != arr.shape:
            raise ParseError(
                f"{path}: parameter {name!r} has shape {loaded.shape}, expected {arr.shape}"
            )
        arr[...] = loaded
    return params, payload.get("extra", {})


def write_trace_csv(trace, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "total", "lct", "asl", "val_map"])
        for row in trace:
            writer.writerow(
                [
                    row.epoch,
                    f"{row.total:.6f}",
                    f"{row.lct:.6f}",
                    f"{row.asl:.6f}",
                    f"{row.val_map:.6f}",
                ]
            )
