"""Dense matrix helpers and a symmetric eigensolver.

All operations act on plain float64 numpy arrays and are pure functions;
nothing here keeps state, so everything is safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, RejectedInputError
from .validation import as_matrix, as_vector, require

MAX_JACOBI_SWEEPS = 100
SYMMETRY_TOL = 1e-10
CENTERING_TOL = 1e-8


@dataclass(frozen=True)
class EigDecomposition:
    """Spectral factorization of a symmetric matrix.

    ``eigenvectors`` holds one orthonormal eigenvector per column, ordered to
    match ``eigenvalues`` (sorted non-increasing, ties kept in original index
    order). Each column is sign-fixed so its largest-magnitude entry is
    positive (first such entry on ties).
    """

    eigenvectors: np.ndarray
    eigenvalues: np.ndarray
    source_dim: int

    def nonnegative_eigenvalues(self) -> np.ndarray:
        """Eigenvalues with negative round-off clamped to zero.

        Meant for spectra of covariance matrices, which are positive
        semidefinite up to numerical noise.
        """
        return np.maximum(self.eigenvalues, 0.0)


def mat_mul(a, b) -> np.ndarray:
    """Matrix product with explicit shape validation.

    Raises
    ------
    RejectedInputError
        If the inner dimensions disagree.
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise RejectedInputError(
            f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    return a @ b


def covariance(m) -> np.ndarray:
    """Sample covariance of the columns of an already mean-centered matrix.

    Computes ``m @ m.T / (n_cols - 1)`` and enforces symmetry by averaging
    the result with its transpose.

    Raises
    ------
    RejectedInputError
        If there are fewer than two columns, or any row's mean exceeds
        ``1e-8`` times that row's magnitude scale (the input was not
        centered). The scale is the row's largest magnitude, floored at 1
        so that cancellation noise from centering large values still passes.
    """
    m = as_matrix(m, "m")
    n = m.shape[1]
    if n < 2:
        raise RejectedInputError(f"covariance needs at least 2 columns, got {n}")
    row_means = m.mean(axis=1)
    row_scale = np.maximum(np.abs(m).max(axis=1), 1.0)
    if np.any(np.abs(row_means) > CENTERING_TOL * row_scale):
        raise RejectedInputError("matrix columns are not mean-centered")
    c = (m @ m.T) / (n - 1)
    return (c + c.T) / 2.0


def sym_eig(c, tol: float = 1e-12) -> EigDecomposition:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps rotate every off-diagonal pair per pass; convergence is declared
    when the largest off-diagonal magnitude falls below ``tol`` times the
    Frobenius norm of the input. Capped at ``MAX_JACOBI_SWEEPS`` sweeps.

    Raises
    ------
    RejectedInputError
        If the input is not square or not symmetric within ``1e-10``
        relative to its largest entry.
    NumericalError
        On non-convergence; carries the relative off-diagonal residual.
    """
    c = as_matrix(c, "c")
    n = c.shape[0]
    require(c.shape[1] == n, f"matrix must be square, got {c.shape}")
    require(tol > 0, "tol must be positive")
    max_abs = float(np.abs(c).max()) if n else 0.0
    asym = float(np.abs(c - c.T).max()) if n else 0.0
    if asym > SYMMETRY_TOL * max(1.0, max_abs):
        raise RejectedInputError(f"matrix is not symmetric (max asymmetry {asym:g})")

    a = c.copy()
    v = np.eye(n)
    fro = float(np.linalg.norm(c))
    if fro == 0.0 or n < 2:
        eigenvalues = np.diag(a).copy()
        return _ordered(eigenvalues, v, n)

    threshold = tol * fro
    converged = False
    for _ in range(MAX_JACOBI_SWEEPS):
        off = _max_offdiag(a)
        if off <= threshold:
            converged = True
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                cs = 1.0 / math.sqrt(1.0 + t * t)
                sn = t * cs
                _rotate(a, v, p, q, cs, sn)
    if not converged and _max_offdiag(a) > threshold:
        residual = _max_offdiag(a) / fro
        raise NumericalError(
            f"Jacobi sweeps did not converge within {MAX_JACOBI_SWEEPS} passes "
            f"(relative off-diagonal residual {residual:g})",
            residual=residual)
    return _ordered(np.diag(a).copy(), v, n)


def _max_offdiag(a: np.ndarray) -> float:
    off = a - np.diag(np.diag(a))
    return float(np.abs(off).max())


def _rotate(a: np.ndarray, v: np.ndarray, p: int, q: int, cs: float, sn: float) -> None:
    """Apply the two-sided rotation G.T @ A @ G in place (G rotates plane p,q)."""
    ap = a[:, p].copy()
    aq = a[:, q].copy()
    a[:, p] = cs * ap - sn * aq
    a[:, q] = sn * ap + cs * aq
    rp = a[p, :].copy()
    rq = a[q, :].copy()
    a[p, :] = cs * rp - sn * rq
    a[q, :] = sn * rp + cs * rq
    # analytically zero after the rotation
    a[p, q] = 0.0
    a[q, p] = 0.0
    vp = v[:, p].copy()
    vq = v[:, q].copy()
    v[:, p] = cs * vp - sn * vq
    v[:, q] = sn * vp + cs * vq


def _ordered(eigenvalues: np.ndarray, vectors: np.ndarray, n: int) -> EigDecomposition:
    """Sort descending (stable on ties) and fix eigenvector signs."""
    order = np.argsort(-eigenvalues, kind="stable")
    eigenvalues = eigenvalues[order]
    vectors = vectors[:, order]
    if n:
        lead = np.argmax(np.abs(vectors), axis=0)
        signs = np.where(vectors[lead, np.arange(n)] < 0.0, -1.0, 1.0)
        vectors = vectors * signs
    return EigDecomposition(eigenvectors=vectors, eigenvalues=eigenvalues, source_dim=n)


def effective_rank(values, fraction: float) -> int:
    """Smallest count of leading values capturing ``fraction`` of the total sum.

    ``values`` must be nonnegative and sorted non-increasing. Returns 0 when
    the values sum to zero.
    """
    v = as_vector(values, "values")
    require(0.0 < fraction <= 1.0, f"fraction must be in (0, 1], got {fraction}")
    if v.size == 0:
        return 0
    require(bool(np.all(v >= 0.0)), "values must be nonnegative")
    require(bool(np.all(v[1:] <= v[:-1])), "values must be sorted non-increasing")
    cums = np.cumsum(v)
    total = float(cums[-1])
    if total == 0.0:
        return 0
    return int(np.searchsorted(cums, fraction * total, side="left")) + 1
