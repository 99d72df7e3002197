"""Asymmetric multi-label classification loss and the combined objective that
adds the layer-wise transport divergence on top of it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .distributions import as_label_vector
from .errors import NumericalError, ShapeError
from .transport import layerwise_ct

PROB_CLAMP = 1e-7


@dataclass
class LossConfig:
    """gamma_plus/gamma_minus focus the positive/negative log terms; alpha
    scales the transport term; start_layer is 1-indexed."""

    gamma_plus: float = 0.0
    gamma_minus: float = 2.0
    alpha: float = 1.0
    start_layer: int = 1


@dataclass
class GradientBundle:
    """Partials keyed by parameter name, plus the loss values they came from."""

    partials: dict[str, np.ndarray]
    total: float
    lct: float
    asl: float

    def __post_init__(self):
        for name, g in self.partials.items():
            if not np.isfinite(g).all():
                raise NumericalError(f"non-finite gradient in parameter group {name!r}")


def asl_loss(probs, y, cfg: LossConfig | None = None) -> float:
    """Asymmetric binary loss averaged over classes.

    Probabilities are clamped to [1e-7, 1 - 1e-7] before the logs. The
    positive term is weighted by (1-p)^gamma_plus, the negative term by
    p^gamma_minus; both gammas at zero reduce this to mean binary
    cross-entropy.
    """
    cfg = cfg or LossConfig()
    p = np.asarray(probs, dtype=np.float64).ravel()
    yv = as_label_vector(y)
    if p.size != yv.size:
        raise ShapeError(f"{p.size} probabilities but {yv.size} labels")
    if np.isnan(p).any():
        raise NumericalError("probabilities contain NaN")
    p = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    pos = np.log(p)
    if cfg.gamma_plus != 0.0:
        pos = (1.0 - p) ** cfg.gamma_plus * pos
    neg = np.log(1.0 - p)
    if cfg.gamma_minus != 0.0:
        neg = p**cfg.gamma_minus * neg
    return float(-(yv * pos + (1 - yv) * neg).mean())


def combined_loss(outputs, targets, cfg: LossConfig | None = None) -> tuple[float, float, float]:
    """alpha * layerwise transport + asymmetric loss, from encoder outputs.

    ``outputs`` must expose per_layer_patches, per_layer_labels,
    probabilities, and navigator (any encode result does). Returns
    (total, lct, asl); total - alpha * lct - asl is exactly zero.
    """
    cfg = cfg or LossConfig()
    lct = layerwise_ct(
        outputs.per_layer_patches,
        outputs.per_layer_labels,
        outputs.navigator,
        cfg.start_layer,
    )
    asl = asl_loss(outputs.probabilities, targets, cfg)
    return cfg.alpha * lct + asl, lct, asl


def loss_gradients(
    model,
    batch,
    cfg: LossConfig | None = None,
    top_k: int | None = None,
    beta_mode: str = "masked",
    topk_mode: str = "sparse",
) -> GradientBundle:
    """Gradients of the batch-mean combined loss for every parameter group.

    Built by reverse-mode differentiation of the same graph the trainer runs;
    the finite-difference checker in numerics is the independent reference.
    """
    from . import model as model_mod  # deferred: model imports this module

    cfg = cfg or LossConfig()
    tensors = model_mod.parameter_tensors(model)
    total_t, lct_t, asl_t = model_mod.batch_objective(
        tensors, model, batch, cfg, top_k=top_k, beta_mode=beta_mode, topk_mode=topk_mode
    )
    from .autodiff import backward

    backward(total_t)
    partials = {
        name: (t.grad if t.grad is not None else np.zeros_like(t.value))
        for name, t in tensors.items()
    }
    return GradientBundle(
        partials=partials,
        total=float(total_t.value),
        lct=float(lct_t.value),
        asl=float(asl_t.value),
    )


def warmup_gradients(
    model,
    batch,
    cfg: LossConfig | None = None,
    top_k: int | None = None,
    beta_mode: str = "masked",
    topk_mode: str = "sparse",
) -> GradientBundle:
    """Classification-phase gradients for the two-phase trainer.

    The classifier groups (encoder, label table and transforms, head) follow
    the classification loss alone; the navigator, which no other loss and no
    other group's gradient touches, follows the raw transport loss so its
    temperature is already calibrated to the learned geometry when the joint
    phase starts. With alpha = 0 the navigator is left untouched, keeping
    "alpha zero means transport nowhere in training" literally true.
    """
    from . import model as model_mod  # deferred: model imports this module

    cfg = cfg or LossConfig()
    tensors = model_mod.parameter_tensors(model)
    total_t, lct_t, asl_t = model_mod.batch_objective(
        tensors, model, batch, cfg, top_k=top_k, beta_mode=beta_mode, topk_mode=topk_mode
    )
    from .autodiff import backward

    backward(asl_t)
    partials = {
        name: (t.grad if t.grad is not None else np.zeros_like(t.value))
        for name, t in tensors.items()
    }
    if cfg.alpha > 0.0:
        backward(lct_t)
        for name, t in tensors.items():
            if name.startswith("navigator."):
                partials[name] = (
                    t.grad if t.grad is not None else np.zeros_like(t.value)
                )
    return GradientBundle(
        partials=partials,
        total=float(asl_t.value),
        lct=float(lct_t.value),
        asl=float(asl_t.value),
    )
