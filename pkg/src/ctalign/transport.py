"""Bidirectional conditional-transport divergence between weighted point sets.

Both transport plans are closed-form: each source point spreads its weight
over the targets through a softmax of negative navigator distances, so no
inner optimization runs. A log-domain Sinkhorn solver is included as an
entropic-OT baseline on the same cost matrix, and plan columns can be
exported as bicubically resampled square grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .distributions import DiscretePointSet
from .errors import (
    ConfigError,
    EvaluationError,
    GridError,
    NumericalError,
    ShapeError,
)
from .numerics import as_matrix, as_simplex, cosine_similarity_matrix


@dataclass
class NavigatorParams:
    """Parameters of the point-to-point distance used inside the plans.

    The default distance is temperature-scaled cosine distance,
    (1 - cos) / tau, with tau = exp(log_temperature) so the learnable scalar
    is unconstrained. Optional projection matrices (p, d) turn it into a
    learnable bilinear distance: cosine is then taken between projected
    columns.
    """

    log_temperature: np.ndarray = field(default_factory=lambda: np.zeros(1))
    proj_patch: np.ndarray | None = None
    proj_label: np.ndarray | None = None

    def __post_init__(self):
        lt = np.atleast_1d(np.asarray(self.log_temperature, dtype=np.float64))
        if lt.size != 1 or not np.isfinite(lt).all():
            raise ConfigError("log_temperature must be a finite scalar")
        self.log_temperature = lt
        if (self.proj_patch is None) != (self.proj_label is None):
            raise ConfigError("projections must be given for both sides or neither")
        if self.proj_patch is not None:
            self.proj_patch = as_matrix(self.proj_patch, "proj_patch")
            self.proj_label = as_matrix(self.proj_label, "proj_label")
            if self.proj_patch.shape != self.proj_label.shape:
                raise ShapeError("projection matrices must share a shape")

    @property
    def tau(self) -> float:
        return float(np.exp(self.log_temperature[0]))


@dataclass(frozen=True)
class TransportPlan:
    """Nonnegative (n, m) coupling with a direction tag.

    Forward plans have rows summing to the source weights; backward plans
    have columns summing to the target weights.
    """

    coupling: np.ndarray
    direction: str

    def __post_init__(self):
        coupling = as_matrix(self.coupling, "coupling")
        if (coupling < 0).any():
            raise NumericalError("coupling has negative entries")
        if self.direction not in ("forward", "backward"):
            raise ConfigError(f"unknown plan direction {self.direction!r}")
        object.__setattr__(self, "coupling", coupling)


@dataclass(frozen=True)
class CTResult:
    total: float
    forward_cost: float
    backward_cost: float
    forward: TransportPlan
    backward: TransportPlan


def cost_matrix(patch_emb, label_emb) -> np.ndarray:
    """Pairwise cosine distance 1 - cos, clamped into [0, 2]."""
    c = 1.0 - cosine_similarity_matrix(patch_emb, label_emb)
    return np.maximum(c, 0.0)


def navigator_distance(patch_emb, label_emb, params: NavigatorParams | None = None) -> np.ndarray:
    """Temperature-scaled cosine distance between columns, (1 - cos) / tau.

    With projections enabled the cosine is computed on the projected columns.
    The distance is symmetric in its arguments by construction.
    """
    params = params or NavigatorParams()
    if params.proj_patch is not None:
        patch_emb = params.proj_patch @ as_matrix(patch_emb, "patch embeddings")
        label_emb = params.proj_label @ as_matrix(label_emb, "label embeddings")
    d = (1.0 - cosine_similarity_matrix(patch_emb, label_emb)) / params.tau
    if np.isnan(d).any():
        raise EvaluationError("navigator distance produced NaN")
    return d


def _check_pair(p: DiscretePointSet, q: DiscretePointSet) -> None:
    if p.dim != q.dim:
        raise ShapeError(f"point sets live in different dimensions: {p.dim} vs {q.dim}")


def forward_plan(p: DiscretePointSet, q: DiscretePointSet, params: NavigatorParams | None = None) -> TransportPlan:
    """Source-conditioned plan: row i is theta_i times a softmax over targets
    of log beta_j - d_ij. Rows sum to the source weights exactly."""
    _check_pair(p, q)
    d = navigator_distance(p.support, q.support, params)
    with np.errstate(divide="ignore"):
        log_beta = np.log(q.weights)
    z = log_beta[None, :] - d
    z -= z.max(axis=1, keepdims=True)
    e = np.exp(z)
    rows = e / e.sum(axis=1, keepdims=True)
    return TransportPlan(p.weights[:, None] * rows, "forward")


def backward_plan(p: DiscretePointSet, q: DiscretePointSet, params: NavigatorParams | None = None) -> TransportPlan:
    """Target-conditioned plan: column j is beta_j times a softmax over source
    points of log theta_i - d_ij. Columns sum to the target weights exactly."""
    _check_pair(p, q)
    d = navigator_distance(p.support, q.support, params)
    with np.errstate(divide="ignore"):
        log_theta = np.log(p.weights)
    z = log_theta[:, None] - d
    z -= z.max(axis=0, keepdims=True)
    e = np.exp(z)
    cols = e / e.sum(axis=0, keepdims=True)
    return TransportPlan(cols * q.weights[None, :], "backward")


def ct_distance(p: DiscretePointSet, q: DiscretePointSet, params: NavigatorParams | None = None) -> CTResult:
    """Bidirectional conditional-transport divergence.

    Both plans price mass movement with the raw cosine-distance cost matrix;
    the navigator temperature only shapes the plans themselves.
    """
    params = params or NavigatorParams()
    cost = cost_matrix(p.support, q.support)
    fwd = forward_plan(p, q, params)
    bwd = backward_plan(p, q, params)
    fc = float((fwd.coupling * cost).sum())
    bc = float((bwd.coupling * cost).sum())
    return CTResult(fc + bc, fc, bc, fwd, bwd)


def layerwise_ct(
    per_layer_p,
    per_layer_q,
    params: NavigatorParams | None = None,
    start_layer: int = 1,
) -> float:
    """Sum of per-layer divergences from 1-indexed start_layer through the top."""
    if len(per_layer_p) != len(per_layer_q):
        raise ShapeError(
            f"{len(per_layer_p)} patch layers but {len(per_layer_q)} label layers"
        )
    depth = len(per_layer_p)
    if depth == 0:
        raise ConfigError("need at least one layer")
    if not 1 <= start_layer <= depth:
        raise ConfigError(f"start_layer {start_layer} outside 1..{depth}")
    total = 0.0
    for p, q in zip(per_layer_p[start_layer - 1 :], per_layer_q[start_layer - 1 :]):
        total += ct_distance(p, q, params).total
    return total


@dataclass(frozen=True)
class SinkhornResult:
    cost: float
    plan: np.ndarray
    converged: bool
    iterations: int
    marginal_violation: float


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.exp(a - m).sum(axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis)


def sinkhorn_ot(
    theta,
    beta,
    cost,
    epsilon: float = 0.05,
    max_iter: int = 1000,
    tol: float = 1e-6,
) -> SinkhornResult:
    """Entropic OT between fixed marginals, iterated in the log domain.

    Stops when the summed L1 violation of both marginals drops below tol.
    On non-convergence the best iterate is returned with converged=False
    rather than raising.
    """
    theta = as_simplex(theta, "theta")
    beta = as_simplex(beta, "beta")
    c = as_matrix(cost, "cost")
    if c.shape != (theta.size, beta.size):
        raise ShapeError(f"cost shape {c.shape} does not match marginals")
    if (c < 0).any():
        raise NumericalError("cost matrix has negative entries")
    if epsilon <= 0 or tol <= 0 or max_iter < 1:
        raise ConfigError("epsilon, tol must be positive and max_iter >= 1")

    log_k = -c / epsilon
    with np.errstate(divide="ignore"):
        log_theta = np.log(theta)
        log_beta = np.log(beta)
    log_v = np.zeros(beta.size)
    best_plan = None
    best_viol = math.inf
    iterations = 0
    converged = False
    for iterations in range(1, max_iter + 1):
        log_u = log_theta - _logsumexp(log_k + log_v[None, :], axis=1)
        log_v = log_beta - _logsumexp(log_k + log_u[:, None], axis=0)
        plan = np.exp(log_u[:, None] + log_k + log_v[None, :])
        viol = float(
            np.abs(plan.sum(axis=1) - theta).sum() + np.abs(plan.sum(axis=0) - beta).sum()
        )
        if viol < best_viol:
            best_viol = viol
            best_plan = plan
        if viol < tol:
            converged = True
            break
    cost_value = float((best_plan * c).sum())
    return SinkhornResult(cost_value, best_plan, converged, iterations, best_viol)


def _catmull_rom(s: float) -> float:
    # Keys cubic kernel with a = -0.5
    s = abs(s)
    if s < 1.0:
        return 1.0 + s * s * (1.5 * s - 2.5)
    if s < 2.0:
        return 2.0 - s * (4.0 - s * (2.5 - 0.5 * s))
    return 0.0


def _resample_matrix(src: int, dst: int) -> np.ndarray:
    """Row operator for separable bicubic resampling with edge clamping."""
    w = np.zeros((dst, src))
    scale = src / dst
    for i in range(dst):
        x = (i + 0.5) * scale - 0.5
        base = math.floor(x)
        frac = x - base
        for j in range(-1, 3):
            idx = min(max(base + j, 0), src - 1)
            w[i, idx] += _catmull_rom(frac - j)
    return w


def export_plan_grid(plan_column, target_size: int) -> np.ndarray:
    """Turn one plan column into a square heat grid.

    Min-max normalizes the column to [0, 1] (an all-constant column becomes
    zeros), reshapes it row-major to sqrt(N) x sqrt(N), then bicubically
    resamples to target_size x target_size with edge clamping. The output is
    clamped back into [0, 1] since the cubic kernel can overshoot.
    """
    col = np.asarray(plan_column, dtype=np.float64).ravel()
    if col.size == 0:
        raise GridError("plan column is empty")
    if not np.isfinite(col).all():
        raise NumericalError("plan column contains NaN or Inf")
    side = math.isqrt(col.size)
    if side * side != col.size:
        raise GridError(f"column length {col.size} is not a perfect square")
    if target_size < side:
        raise GridError(f"target size {target_size} is below the grid side {side}")
    span = col.max() - col.min()
    norm = np.zeros_like(col) if span == 0.0 else (col - col.min()) / span
    grid = norm.reshape(side, side)
    if target_size == side:
        return grid.copy()
    w = _resample_matrix(side, target_size)
    return np.clip(w @ grid @ w.T, 0.0, 1.0)
