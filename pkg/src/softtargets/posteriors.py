"""Posterior normalization, per-class grouping, and storage quantization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RejectedInputError
from .validation import (as_labels, as_posterior, as_posterior_rows, as_seed,
                         as_vector, require)

DEFAULT_DECIMALS = 2
DEFAULT_LOG_EPS = 1e-8


@dataclass(frozen=True)
class ClassPosteriorMatrix:
    """Posteriors assigned to one class, stacked as columns of a K x N matrix."""

    class_id: int
    matrix: np.ndarray

    @property
    def n_classes(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_frames(self) -> int:
        return self.matrix.shape[1]


def make_posterior(raw) -> np.ndarray:
    """Normalize a nonnegative vector to the probability simplex.

    Raises
    ------
    RejectedInputError
        If any entry is negative or no entry is positive.
    """
    r = as_vector(raw, "raw")
    require(r.size >= 1, "raw must be non-empty")
    require(bool(np.all(r >= 0.0)), "raw has negative entries")
    total = float(r.sum())
    require(total > 0.0, "raw has no positive entry")
    return r / total


def log_floor(p, eps: float = DEFAULT_LOG_EPS) -> np.ndarray:
    """Componentwise ln(max(prob, eps)); keeps zero probabilities finite."""
    require(eps > 0.0, f"eps must be positive, got {eps}")
    p = as_posterior(p, "p")
    return np.log(np.maximum(p, eps))


def quantize_store(p, decimals: int = DEFAULT_DECIMALS) -> np.ndarray:
    """Round to ``decimals`` places (half away from zero), then renormalize.

    If every entry rounds to zero, the largest original entry is set to
    ``10 ** -decimals`` before renormalizing, so the result is always a
    valid posterior.
    """
    p = as_posterior(p, "p")
    require(isinstance(decimals, (int, np.integer)) and decimals >= 1,
            f"decimals must be an integer >= 1, got {decimals}")
    scale = 10.0 ** int(decimals)
    # entries are nonnegative, so floor(x * scale + 0.5) rounds half away from zero
    q = np.floor(p * scale + 0.5) / scale
    if float(q.sum()) == 0.0:
        q = q.copy()
        q[int(np.argmax(p))] = 10.0 ** (-int(decimals))
    return q / q.sum()


def quantize_rows(X, decimals: int = DEFAULT_DECIMALS) -> np.ndarray:
    """Apply :func:`quantize_store` to every row of an (n, K) array."""
    X = as_posterior_rows(X, "X")
    out = np.empty_like(X)
    for i in range(X.shape[0]):
        out[i] = quantize_store(X[i], decimals)
    return out


def group_by_class(posteriors, align, cap: int, seed: int) -> dict[int, ClassPosteriorMatrix]:
    """Partition posteriors into per-class column matrices.

    Classes exceeding ``cap`` frames keep a seeded uniform subsample (the
    subsample stream is derived from ``seed`` and the class id, so the result
    does not depend on iteration order). Classes with zero frames are absent
    from the map.
    """
    X = as_posterior_rows(posteriors, "posteriors")
    labels = as_labels(align, n_classes=X.shape[1], name="align")
    if X.shape[0] != labels.shape[0]:
        raise RejectedInputError(
            f"got {X.shape[0]} posteriors but {labels.shape[0]} alignment labels")
    require(isinstance(cap, (int, np.integer)) and cap >= 1,
            f"cap must be an integer >= 1, got {cap}")
    seed = as_seed(seed)

    out: dict[int, ClassPosteriorMatrix] = {}
    for k in np.unique(labels):
        idx = np.flatnonzero(labels == k)
        if idx.size > cap:
            rng = np.random.default_rng([seed, int(k)])
            keep = np.sort(rng.choice(idx.size, size=cap, replace=False))
            idx = idx[keep]
        out[int(k)] = ClassPosteriorMatrix(class_id=int(k), matrix=X[idx].T.copy())
    return out
