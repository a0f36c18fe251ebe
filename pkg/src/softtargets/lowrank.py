"""Low-rank soft-target enhancement.

Per class, posteriors are mean-centered in the log domain, the covariance of
the centered logs is eigendecomposed, and the leading eigenvectors covering a
chosen fraction of spectral mass form a projection basis. Enhancing a
posterior projects its centered log onto that basis, restores the mean,
exponentiates, and renormalizes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .errors import RejectedInputError
from .linalg import effective_rank, covariance, sym_eig
from .posteriors import DEFAULT_LOG_EPS, ClassPosteriorMatrix
from .validation import as_labels, as_posterior, as_posterior_rows, require

DEFAULT_VARIANCE_FRACTION = 0.8
EIG_TOL = 1e-12


@dataclass(frozen=True)
class LowRankBasis:
    """Per-class projection basis over mean-centered log posteriors.

    ``basis`` is K x rank with orthonormal columns; ``kept_eigenvalues`` are
    the matching covariance eigenvalues, non-increasing. When the whole
    spectrum is zero (a class whose posteriors never vary) the stored basis
    is the first canonical direction and enhancement collapses every input
    to the normalized exponential of ``mean_log``.
    """

    class_id: int
    mean_log: np.ndarray
    basis: np.ndarray
    kept_eigenvalues: np.ndarray
    variance_fraction: float

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    @property
    def is_degenerate(self) -> bool:
        return bool(np.all(self.kept_eigenvalues == 0.0))


def centered_log_matrix(m: ClassPosteriorMatrix, eps: float = DEFAULT_LOG_EPS):
    """Floored log columns and their per-dimension mean."""
    require(eps > 0.0, f"eps must be positive, got {eps}")
    logs = np.log(np.maximum(m.matrix, eps))
    mean_log = logs.mean(axis=1)
    return logs - mean_log[:, None], mean_log


def class_log_rank(m: ClassPosteriorMatrix, fraction: float = 0.95,
                   eps: float = DEFAULT_LOG_EPS) -> int:
    """Effective rank of a class's centered-log posterior matrix."""
    centered, _ = centered_log_matrix(m, eps)
    eig = sym_eig(covariance(centered), EIG_TOL)
    return effective_rank(eig.nonnegative_eigenvalues(), fraction)


def compute_basis(m: ClassPosteriorMatrix, sigma: float = DEFAULT_VARIANCE_FRACTION,
                  eps: float = DEFAULT_LOG_EPS) -> LowRankBasis:
    """Fit the per-class projection basis at variance fraction ``sigma``.

    The retained rank is the smallest eigenvalue count whose mass reaches
    ``sigma`` of the total; an all-zero spectrum keeps a single canonical
    direction and marks the basis degenerate.
    """
    require(0.0 < sigma <= 1.0, f"sigma must be in (0, 1], got {sigma}")
    if m.n_frames < 2:
        raise RejectedInputError(
            f"class {m.class_id} needs at least 2 columns, got {m.n_frames}")
    centered, mean_log = centered_log_matrix(m, eps)
    eig = sym_eig(covariance(centered), EIG_TOL)
    values = eig.nonnegative_eigenvalues()
    rank = effective_rank(values, sigma)
    if rank == 0:
        rank = 1
    return LowRankBasis(class_id=m.class_id,
                        mean_log=mean_log,
                        basis=eig.eigenvectors[:, :rank].copy(),
                        kept_eigenvalues=values[:rank].copy(),
                        variance_fraction=float(sigma))


def low_rank_enhance(z, basis: LowRankBasis, eps: float = DEFAULT_LOG_EPS) -> np.ndarray:
    """Project one posterior onto the basis in centered-log space.

    Returns the normalized exponential of (projection + mean log), which is
    always a valid posterior.
    """
    z = as_posterior(z, "z")
    if z.shape[0] != basis.mean_log.shape[0]:
        raise RejectedInputError(
            f"posterior has {z.shape[0]} classes, basis expects {basis.mean_log.shape[0]}")
    require(eps > 0.0, f"eps must be positive, got {eps}")
    if basis.is_degenerate:
        out = np.exp(basis.mean_log)
        return out / out.sum()
    centered = np.log(np.maximum(z, eps)) - basis.mean_log
    projected = basis.basis @ (basis.basis.T @ centered)
    out = np.exp(projected + basis.mean_log)
    return out / out.sum()


def enhance_matrix(m: ClassPosteriorMatrix, basis: LowRankBasis,
                   eps: float = DEFAULT_LOG_EPS) -> ClassPosteriorMatrix:
    """Column-wise :func:`low_rank_enhance` over a whole class matrix."""
    if m.n_classes != basis.mean_log.shape[0]:
        raise RejectedInputError(
            f"matrix has {m.n_classes} classes, basis expects {basis.mean_log.shape[0]}")
    require(eps > 0.0, f"eps must be positive, got {eps}")
    if basis.is_degenerate:
        col = np.exp(basis.mean_log)
        col /= col.sum()
        return ClassPosteriorMatrix(m.class_id, np.tile(col[:, None], (1, m.n_frames)))
    centered = np.log(np.maximum(m.matrix, eps)) - basis.mean_log[:, None]
    projected = basis.basis @ (basis.basis.T @ centered)
    out = np.exp(projected + basis.mean_log[:, None])
    return ClassPosteriorMatrix(m.class_id, out / out.sum(axis=0, keepdims=True))


class LowRankEnhancer(BaseEstimator, TransformerMixin):
    """Estimator wrapper: fit per-class bases, transform labeled posteriors.

    Both ``fit`` and ``transform`` need class labels, because each posterior
    is enhanced with the basis of its own labeled class. Classes seen with
    fewer than 2 frames at fit time pass through unenhanced.

    Parameters
    ----------
    sigma : float
        Fraction of spectral mass retained per class.
    eps : float
        Floor applied to probabilities before taking logs.
    cap : int
        Per-class frame cap when fitting; larger classes are subsampled.
    seed : int
        Seed for the subsampling stream.
    """

    def __init__(self, sigma: float = DEFAULT_VARIANCE_FRACTION,
                 eps: float = DEFAULT_LOG_EPS, cap: int = 10_000, seed: int = 0):
        self.sigma = sigma
        self.eps = eps
        self.cap = cap
        self.seed = seed

    def fit(self, X, y):
        from .posteriors import group_by_class

        X = as_posterior_rows(X, "X")
        y = as_labels(y, n_classes=X.shape[1], name="y")
        groups = group_by_class(X, y, cap=self.cap, seed=self.seed)
        self.bases_ = {}
        self.skipped_classes_ = []
        for k, cpm in sorted(groups.items()):
            if cpm.n_frames < 2:
                self.skipped_classes_.append(k)
                continue
            self.bases_[k] = compute_basis(cpm, sigma=self.sigma, eps=self.eps)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X, y=None):
        if not hasattr(self, "bases_"):
            raise NotFittedError("LowRankEnhancer is not fitted")
        if y is None:
            raise RejectedInputError("transform needs class labels")
        X = as_posterior_rows(X, "X")
        y = as_labels(y, n_classes=X.shape[1], name="y")
        if X.shape[0] != y.shape[0]:
            raise RejectedInputError("X and y lengths differ")
        out = np.array(X, copy=True)
        for k, basis in self.bases_.items():
            idx = np.flatnonzero(y == k)
            if idx.size == 0:
                continue
            block = ClassPosteriorMatrix(k, X[idx].T)
            out[idx] = enhance_matrix(block, basis, eps=self.eps).matrix.T
        return out

    def fit_transform(self, X, y):
        return self.fit(X, y).transform(X, y)
