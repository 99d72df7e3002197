"""Weighted point sets over embeddings, plus the label-guided weight builders.

A point set pairs a (d, n) support matrix (one column per point) with a
simplex weight vector. Patch-side weights come from a sparse top-k softmax
over label-guided similarity scores; label-side weights come straight from
the ground-truth multi-hot vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EmptyLabelSetError, ShapeError
from .numerics import as_matrix, as_simplex, softmax_stable, top_k_mask

TOPK_MODES = ("sparse", "binary")
BETA_MODES = ("masked", "literal")


@dataclass(frozen=True)
class DiscretePointSet:
    """Discrete distribution: one support column per point, simplex weights."""

    support: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        support = as_matrix(self.support, "support")
        weights = as_simplex(self.weights, "weights")
        if weights.size != support.shape[1]:
            raise ShapeError(
                f"{support.shape[1]} support columns but {weights.size} weights"
            )
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "weights", weights)

    @property
    def dim(self) -> int:
        return self.support.shape[0]

    @property
    def size(self) -> int:
        return self.support.shape[1]


def make_point_set(support, weights) -> DiscretePointSet:
    """Validated constructor for DiscretePointSet."""
    return DiscretePointSet(support, weights)


def as_label_vector(y) -> np.ndarray:
    """Coerce a multi-hot label vector to int64, enforcing {0, 1} entries."""
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise ShapeError(f"label vector must be 1-D, got {arr.ndim}-D")
    if arr.size == 0:
        raise ShapeError("label vector must be nonempty")
    out = arr.astype(np.int64, copy=True)
    if not np.array_equal(out, arr) or not np.isin(out, (0, 1)).all():
        raise ShapeError("label vector entries must be 0 or 1")
    return out


def normalized_labels(y) -> np.ndarray:
    """y / sum(y). Raises EmptyLabelSetError on an all-zero vector."""
    yv = as_label_vector(y)
    total = yv.sum()
    if total == 0:
        raise EmptyLabelSetError("label vector has no positive entries")
    return yv / total


def default_top_k(n_points: int) -> int:
    """Default patch budget of 200, clamped to the available point count."""
    return min(200, n_points)


def build_theta(patch_emb, label_emb, y, k: int, topk_mode: str = "sparse") -> np.ndarray:
    """Sparse label-guided patch weights.

    Scores each patch column against the label-aware query o = label_emb @ yhat,
    keeps the top k, and renormalizes with a softmax. "sparse" keeps the raw
    scores of the survivors (masked entries become exact zeros); "binary"
    replaces survivor scores with 1 before the softmax, which yields a dense
    two-level vector.
    """
    E = as_matrix(patch_emb, "patch embeddings")
    L = as_matrix(label_emb, "label embeddings")
    if E.shape[0] != L.shape[0]:
        raise ShapeError(
            f"embedding dimension mismatch: {E.shape[0]} vs {L.shape[0]}"
        )
    yhat = normalized_labels(y)
    if yhat.size != L.shape[1]:
        raise ShapeError(f"{L.shape[1]} label columns but {yhat.size} labels")
    scores = E.T @ (L @ yhat)
    if topk_mode == "sparse":
        return softmax_stable(top_k_mask(scores, k))
    if topk_mode == "binary":
        masked = top_k_mask(scores, k)
        return softmax_stable(np.where(np.isneginf(masked), 0.0, 1.0))
    raise ConfigError(f"unknown topk_mode {topk_mode!r}, expected one of {TOPK_MODES}")


def build_beta(y, mode: str = "masked") -> np.ndarray:
    """Label weights from a multi-hot vector.

    "masked" gives uniform mass over the positive labels and exact zeros on
    negatives; "literal" is a plain softmax of the 0/1 entries, so negatives
    keep nonzero mass.
    """
    yv = as_label_vector(y)
    if yv.sum() == 0:
        raise EmptyLabelSetError("label vector has no positive entries")
    if mode == "masked":
        return yv / yv.sum()
    if mode == "literal":
        return softmax_stable(yv.astype(np.float64))
    raise ConfigError(f"unknown beta mode {mode!r}, expected one of {BETA_MODES}")
