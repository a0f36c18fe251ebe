"""Sparse soft-target enhancement.

Per class, an overcomplete dictionary is learned online over that class's
posteriors; enhancement codes a posterior against the dictionary by solving

    minimize  ||z - D a||_2^2 + lambda * ||a||_1

with cyclic coordinate descent, then reconstructs D a, clamps negatives, and
renormalizes. The objective carries no 1/2 factor, so the soft threshold is
lambda / 2 and all stationarity checks use the factor-2 gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .errors import (DegenerateReconstructionError, NumericalError,
                     RejectedInputError)
from .posteriors import ClassPosteriorMatrix
from .validation import as_labels, as_posterior, as_posterior_rows, as_seed, require

DEFAULT_LAMBDA = 0.1
DEFAULT_CD_TOL = 1e-10
DEFAULT_CD_MAX_ITER = 10_000
_DEAD_ATOM_TOL = 1e-12


def default_atom_count(n_classes: int) -> int:
    """Default dictionary width, scaling with the class count."""
    return max(1, math.ceil(n_classes / 8))


@dataclass(frozen=True)
class SparseDictionary:
    """Per-class dictionary with unit-capped column norms.

    ``objective_history`` is a learning diagnostic: the running average of
    per-sample coding objectives, one value per epoch (empty for hand-built
    dictionaries).
    """

    class_id: int
    atoms: np.ndarray
    lambda_train: float
    objective_history: tuple[float, ...] = field(default=(), compare=False)

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[1]

    @property
    def n_classes(self) -> int:
        return self.atoms.shape[0]


@dataclass(frozen=True)
class SparseCode:
    """Coefficient vector for one posterior; support derives from it exactly."""

    coeffs: np.ndarray

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.coeffs)


def _soft_threshold(x: float, t: float) -> float:
    if x > t:
        return x - t
    if x < -t:
        return x + t
    return 0.0


def _cd_lasso(target: np.ndarray, atoms: np.ndarray, lam: float,
              tol: float, max_iter: int,
              require_stationarity: bool = True) -> np.ndarray:
    """Cyclic coordinate descent with cached Gram / covariance products.

    A sweep is one pass over every coordinate. After a sweep whose largest
    coefficient change is at most ``tol``, the stationarity conditions are
    checked and the solve finishes once they hold within ``tol``; with
    ``require_stationarity=False`` (internal learning loops, where
    near-parallel atoms can make the last digits unreachable) the
    coefficient-change criterion alone ends the solve.
    """
    n_atoms = atoms.shape[1]
    gram = atoms.T @ atoms
    cov = atoms.T @ target
    diag = np.diag(gram).copy()
    alpha = np.zeros(n_atoms)
    gram_alpha = np.zeros(n_atoms)

    for _ in range(max_iter):
        max_delta = 0.0
        for j in range(n_atoms):
            if diag[j] <= 0.0:
                continue  # zero atom never activates
            rho = cov[j] - gram_alpha[j] + gram[j, j] * alpha[j]
            new = _soft_threshold(rho, lam / 2.0) / diag[j]
            delta = new - alpha[j]
            if delta != 0.0:
                gram_alpha += gram[:, j] * delta
                alpha[j] = new
                max_delta = max(max_delta, abs(delta))
        if max_delta <= tol:
            if not require_stationarity:
                return alpha
            if _stationarity(target, atoms, alpha, lam) <= tol:
                return alpha
    if not require_stationarity:
        return alpha
    violation = _stationarity(target, atoms, alpha, lam)
    if violation > tol:
        raise NumericalError(
            f"coordinate descent hit the {max_iter}-sweep cap with stationarity "
            f"violation {violation:g} > {tol:g}", residual=violation)
    return alpha


def _stationarity(target: np.ndarray, atoms: np.ndarray,
                  alpha: np.ndarray, lam: float) -> float:
    residual = target - atoms @ alpha
    grad = 2.0 * (atoms.T @ residual)
    active = alpha != 0.0
    worst = 0.0
    if np.any(active):
        worst = float(np.abs(grad[active] - lam * np.sign(alpha[active])).max())
    if np.any(~active):
        worst = max(worst, float(np.maximum(np.abs(grad[~active]) - lam, 0.0).max()))
    return worst


def sparse_code(z, dictionary: SparseDictionary, lam: float = DEFAULT_LAMBDA,
                tol: float = DEFAULT_CD_TOL,
                max_iter: int = DEFAULT_CD_MAX_ITER,
                require_stationarity: bool = True) -> SparseCode:
    """Solve the l1-regularized coding problem for one posterior.

    With ``require_stationarity=False`` the best coefficients found when the
    coefficient changes stall are returned instead of raising; batch callers
    coding many frames against possibly ill-conditioned dictionaries use
    this mode.

    Raises
    ------
    NumericalError
        If the sweep cap is reached while the stationarity conditions are
        still violated by more than ``tol``; carries the violation.
    """
    z = as_posterior(z, "z")
    require(lam >= 0.0, f"lambda must be nonnegative, got {lam}")
    require(tol > 0.0, f"tol must be positive, got {tol}")
    require(max_iter >= 1, f"max_iter must be >= 1, got {max_iter}")
    if z.shape[0] != dictionary.n_classes:
        raise RejectedInputError(
            f"posterior has {z.shape[0]} classes, dictionary expects "
            f"{dictionary.n_classes}")
    return SparseCode(_cd_lasso(z, dictionary.atoms, lam, tol, max_iter,
                                require_stationarity))


def kkt_violation(z, dictionary: SparseDictionary, code: SparseCode,
                  lam: float) -> float:
    """Largest stationarity violation of a code under the coding objective."""
    z = as_posterior(z, "z")
    require(lam >= 0.0, f"lambda must be nonnegative, got {lam}")
    coeffs = np.asarray(code.coeffs, dtype=np.float64)
    if z.shape[0] != dictionary.n_classes or coeffs.shape[0] != dictionary.n_atoms:
        raise RejectedInputError("dimension mismatch between code, dictionary, posterior")
    return _stationarity(z, dictionary.atoms, coeffs, lam)


def sparse_reconstruct(code: SparseCode, dictionary: SparseDictionary) -> np.ndarray:
    """Reconstruct a posterior from its code: clamp negatives, renormalize.

    Raises
    ------
    DegenerateReconstructionError
        If the reconstruction has no positive entry (for instance an
        all-zero code).
    """
    coeffs = np.asarray(code.coeffs, dtype=np.float64)
    if coeffs.shape[0] != dictionary.n_atoms:
        raise RejectedInputError(
            f"code has {coeffs.shape[0]} coefficients, dictionary has "
            f"{dictionary.n_atoms} atoms")
    recon = dictionary.atoms @ coeffs
    clamped = np.maximum(recon, 0.0)
    total = float(clamped.sum())
    if total <= 0.0:
        raise DegenerateReconstructionError(
            "reconstruction has no positive mass to normalize")
    return clamped / total


def learn_dictionary(m: ClassPosteriorMatrix, n_atoms: int | None = None,
                     lam: float = DEFAULT_LAMBDA, epochs: int = 5,
                     batch_size: int = 32, seed: int = 0,
                     tol: float = DEFAULT_CD_TOL,
                     max_iter: int = DEFAULT_CD_MAX_ITER) -> SparseDictionary:
    """Learn a per-class dictionary online.

    Atoms start from seeded distinct data columns scaled to unit norm (plus
    seeded random unit vectors when ``n_atoms`` exceeds the frame count).
    Each batch is coded against the current dictionary, the quadratic
    sufficient statistics are accumulated, and one block-coordinate-descent
    pass updates the atoms under the unit-norm cap. Atoms whose accumulated
    energy is dead are re-seeded from the current batch's worst-reconstructed
    sample. ``epochs=0`` returns the initialization unchanged.

    The per-epoch running average of coding objectives is recorded in
    ``objective_history``.
    """
    data = m.matrix
    n_classes, n_frames = data.shape
    if n_atoms is None:
        n_atoms = default_atom_count(n_classes)
    require(n_atoms >= 1, f"n_atoms must be >= 1, got {n_atoms}")
    require(n_frames >= 1, "need at least one frame")
    require(lam > 0.0, f"lambda must be positive for learning, got {lam}")
    require(epochs >= 0, f"epochs must be >= 0, got {epochs}")
    require(batch_size >= 1, f"batch_size must be >= 1, got {batch_size}")
    seed = as_seed(seed)
    if not np.any(data):
        raise RejectedInputError("cannot learn a dictionary from all-zero data")

    rng = np.random.default_rng([seed, m.class_id])
    atoms = _init_atoms(data, n_atoms, rng)
    stats_gram = np.zeros((n_atoms, n_atoms))
    stats_cross = np.zeros((n_classes, n_atoms))
    history = []

    for _ in range(epochs):
        order = rng.permutation(n_frames)
        epoch_obj_sum = 0.0
        for start in range(0, n_frames, batch_size):
            batch = data[:, order[start:start + batch_size]]
            codes = np.column_stack([
                _cd_lasso(batch[:, i], atoms, lam, tol, max_iter,
                          require_stationarity=False)
                for i in range(batch.shape[1])])
            resid = batch - atoms @ codes
            epoch_obj_sum += float((resid ** 2).sum() + lam * np.abs(codes).sum())
            stats_gram += codes @ codes.T
            stats_cross += batch @ codes.T
            _update_atoms(atoms, stats_gram, stats_cross, batch, codes)
        history.append(epoch_obj_sum / n_frames)

    return SparseDictionary(class_id=m.class_id, atoms=atoms,
                            lambda_train=float(lam),
                            objective_history=tuple(history))


_INIT_COSINE_CAP = 0.999


def _init_atoms(data: np.ndarray, n_atoms: int, rng: np.random.Generator) -> np.ndarray:
    """Seeded sampling of distinct data columns, unit-normalized.

    Distinct means distinct as directions: a candidate nearly parallel to an
    already-kept atom (cosine above 0.999) is skipped, since duplicated atoms
    make the coding problem needlessly ill-conditioned. Any shortfall (too
    few distinct directions, or ``n_atoms`` exceeding the frame count) is
    filled with seeded random unit vectors.
    """
    n_classes, n_frames = data.shape
    order = rng.permutation(n_frames)
    kept: list[np.ndarray] = []
    for idx in order:
        if len(kept) == n_atoms:
            break
        col = data[:, idx]
        norm = float(np.linalg.norm(col))
        if norm == 0.0:
            continue
        unit = col / norm
        if kept and float(np.abs(np.column_stack(kept).T @ unit).max()) > _INIT_COSINE_CAP:
            continue
        kept.append(unit)
    while len(kept) < n_atoms:
        extra = rng.standard_normal(n_classes)
        kept.append(extra / np.linalg.norm(extra))
    return np.column_stack(kept)


def _update_atoms(atoms: np.ndarray, stats_gram: np.ndarray,
                  stats_cross: np.ndarray, batch: np.ndarray,
                  codes: np.ndarray) -> None:
    """One block-coordinate-descent pass over the atoms, in place."""
    worst_sample = None
    for j in range(atoms.shape[1]):
        energy = stats_gram[j, j]
        if energy <= _DEAD_ATOM_TOL:
            if worst_sample is None:
                errs = ((batch - atoms @ codes) ** 2).sum(axis=0)
                worst_sample = batch[:, int(np.argmax(errs))]
            norm = float(np.linalg.norm(worst_sample))
            if norm > 0.0:
                atoms[:, j] = worst_sample / norm
            continue
        updated = atoms[:, j] + (stats_cross[:, j] - atoms @ stats_gram[:, j]) / energy
        norm = float(np.linalg.norm(updated))
        if norm <= _DEAD_ATOM_TOL:
            errs = ((batch - atoms @ codes) ** 2).sum(axis=0)
            sample = batch[:, int(np.argmax(errs))]
            sample_norm = float(np.linalg.norm(sample))
            if sample_norm > 0.0:
                atoms[:, j] = sample / sample_norm
            continue
        atoms[:, j] = updated / max(1.0, norm)


class SparseEnhancer(BaseEstimator, TransformerMixin):
    """Estimator wrapper: learn per-class dictionaries, recode posteriors.

    ``fit`` and ``transform`` both need class labels; each posterior is coded
    against its labeled class's dictionary. Classes with fewer than 2 frames
    at fit time, and frames whose reconstruction degenerates, pass through
    unchanged.

    Parameters
    ----------
    n_atoms : int or None
        Dictionary width; ``None`` scales with the class count.
    lam : float
        l1 regularization weight for learning and coding.
    epochs, batch_size : int
        Online learning schedule.
    cap : int
        Per-class frame cap when fitting.
    seed : int
        Seed for subsampling and initialization.
    """

    def __init__(self, n_atoms: int | None = None, lam: float = DEFAULT_LAMBDA,
                 epochs: int = 5, batch_size: int = 32, cap: int = 10_000,
                 seed: int = 0, tol: float = DEFAULT_CD_TOL,
                 max_iter: int = DEFAULT_CD_MAX_ITER):
        self.n_atoms = n_atoms
        self.lam = lam
        self.epochs = epochs
        self.batch_size = batch_size
        self.cap = cap
        self.seed = seed
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        from .posteriors import group_by_class

        X = as_posterior_rows(X, "X")
        y = as_labels(y, n_classes=X.shape[1], name="y")
        groups = group_by_class(X, y, cap=self.cap, seed=self.seed)
        self.dictionaries_ = {}
        self.skipped_classes_ = []
        for k, cpm in sorted(groups.items()):
            if cpm.n_frames < 2:
                self.skipped_classes_.append(k)
                continue
            self.dictionaries_[k] = learn_dictionary(
                cpm, n_atoms=self.n_atoms, lam=self.lam, epochs=self.epochs,
                batch_size=self.batch_size, seed=self.seed, tol=self.tol,
                max_iter=self.max_iter)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X, y=None):
        if not hasattr(self, "dictionaries_"):
            raise NotFittedError("SparseEnhancer is not fitted")
        if y is None:
            raise RejectedInputError("transform needs class labels")
        X = as_posterior_rows(X, "X")
        y = as_labels(y, n_classes=X.shape[1], name="y")
        if X.shape[0] != y.shape[0]:
            raise RejectedInputError("X and y lengths differ")
        out = np.array(X, copy=True)
        for i in range(X.shape[0]):
            dictionary = self.dictionaries_.get(int(y[i]))
            if dictionary is None:
                continue
            code = sparse_code(X[i], dictionary, lam=self.lam, tol=self.tol,
                               max_iter=self.max_iter)
            try:
                out[i] = sparse_reconstruct(code, dictionary)
            except DegenerateReconstructionError:
                pass  # keep the raw posterior for uncodable frames
        return out

    def fit_transform(self, X, y):
        return self.fit(X, y).transform(X, y)
