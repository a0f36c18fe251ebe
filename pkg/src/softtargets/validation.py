"""Input validation helpers shared by the core functions and estimators."""

from __future__ import annotations

import numpy as np

from .errors import RejectedInputError

SIMPLEX_TOL = 1e-9


def require(condition: bool, message: str) -> None:
    if not condition:
        raise RejectedInputError(message)


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D float64 array."""
    arr = np.asarray(a, dtype=np.float64)
    require(arr.ndim == 2, f"{name} must be 2-D, got ndim={arr.ndim}")
    require(arr.size == 0 or bool(np.all(np.isfinite(arr))),
            f"{name} contains non-finite entries")
    return arr


def as_vector(a, name: str = "vector") -> np.ndarray:
    """Coerce to a finite 1-D float64 array."""
    arr = np.asarray(a, dtype=np.float64)
    require(arr.ndim == 1, f"{name} must be 1-D, got ndim={arr.ndim}")
    require(arr.size == 0 or bool(np.all(np.isfinite(arr))),
            f"{name} contains non-finite entries")
    return arr


def as_posterior(p, name: str = "posterior", tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Validate a probability vector: nonnegative, sums to 1 within ``tol``."""
    arr = as_vector(p, name)
    require(arr.size >= 1, f"{name} must be non-empty")
    require(bool(np.all(arr >= 0.0)), f"{name} has negative entries")
    total = float(arr.sum())
    require(abs(total - 1.0) <= tol,
            f"{name} sums to {total!r}, expected 1 within {tol}")
    return arr


def as_posterior_rows(X, name: str = "posteriors", tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Validate an (n, K) array whose rows are probability vectors."""
    arr = as_matrix(X, name)
    require(arr.shape[1] >= 1, f"{name} must have at least one column")
    require(bool(np.all(arr >= 0.0)), f"{name} has negative entries")
    sums = arr.sum(axis=1)
    require(arr.shape[0] == 0 or bool(np.all(np.abs(sums - 1.0) <= tol)),
            f"{name} contains rows that do not sum to 1 within {tol}")
    return arr


def as_labels(y, n_classes: int | None = None, name: str = "labels") -> np.ndarray:
    """Coerce to 1-D integer class indices, optionally bounded by ``n_classes``."""
    arr = np.asarray(y)
    require(arr.ndim == 1, f"{name} must be 1-D, got ndim={arr.ndim}")
    require(arr.size == 0 or np.issubdtype(arr.dtype, np.integer)
            or bool(np.all(arr == np.floor(arr))),
            f"{name} must be integers")
    arr = arr.astype(np.int64)
    require(arr.size == 0 or bool(np.all(arr >= 0)), f"{name} has negative entries")
    if n_classes is not None:
        require(arr.size == 0 or bool(np.all(arr < n_classes)),
                f"{name} has entries >= {n_classes}")
    return arr


def as_seed(seed, name: str = "seed") -> int:
    """Validate a nonnegative integer seed."""
    require(isinstance(seed, (int, np.integer)) and not isinstance(seed, bool),
            f"{name} must be an integer")
    require(int(seed) >= 0, f"{name} must be nonnegative")
    return int(seed)
