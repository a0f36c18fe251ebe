"""Synthetic corpus generator with per-class low-dimensional structure.

Each class places its frames on a seeded affine subspace of feature space
(centroid + orthonormal latent basis), corrupted by isotropic Gaussian
noise. Labeled train/dev/test splits come with ground-truth alignments; two
unlabeled pools mirror in-domain and domain-shifted augmentation sources,
the shifted pool offset along a seeded direction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RejectedInputError
from .validation import as_seed, require

POOL_SAME_DOMAIN = "same_domain"
POOL_SHIFTED = "shifted"

# split tags keep every stream independent of the others' draw counts
_TAG_GEOMETRY = 0
_TAG_TRAIN = 1
_TAG_DEV = 2
_TAG_TEST = 3
_TAG_POOL_SAME = 4
_TAG_POOL_SHIFTED = 5

_SINGULAR_NOISE_FLOOR = 1e-12


@dataclass(frozen=True)
class CorpusConfig:
    n_classes: int = 20
    feature_dim: int = 30
    subspace_dim: int = 3
    noise_level: float = 0.8
    frames_train: int = 8000
    frames_dev: int = 1000
    frames_test: int = 1000
    frames_untranscribed: int = 8000
    domain_shift: float = 1.5
    seed: int = 0

    def __post_init__(self):
        require(self.n_classes >= 2, "need at least 2 classes")
        require(self.feature_dim >= 1, "feature_dim must be >= 1")
        require(1 <= self.subspace_dim < self.n_classes,
                "subspace_dim must be >= 1 and below the class count")
        require(self.subspace_dim <= self.feature_dim,
                "subspace_dim cannot exceed feature_dim")
        require(self.noise_level >= 0.0, "noise_level must be >= 0")
        require(self.domain_shift >= 0.0, "domain_shift must be >= 0")
        for name in ("frames_train", "frames_dev", "frames_test",
                     "frames_untranscribed"):
            require(getattr(self, name) >= 0, f"{name} must be >= 0")
        as_seed(self.seed)


@dataclass(frozen=True)
class CorpusGeometry:
    """Generator parameters: what the oracle classifier knows."""

    centroids: np.ndarray        # (K, F)
    class_bases: np.ndarray      # (K, F, subspace_dim), orthonormal columns
    shift_direction: np.ndarray  # (F,), unit norm


@dataclass(frozen=True)
class Corpus:
    config: CorpusConfig
    geometry: CorpusGeometry
    train_features: np.ndarray
    train_labels: np.ndarray
    dev_features: np.ndarray
    dev_labels: np.ndarray
    test_features: np.ndarray
    test_labels: np.ndarray
    pools: dict[str, np.ndarray]


def _sample_split(rng: np.random.Generator, geometry: CorpusGeometry,
                  n_frames: int, noise_level: float, shift: float):
    n_classes, feature_dim, subspace_dim = geometry.class_bases.shape
    labels = rng.integers(0, n_classes, size=n_frames)
    latents = rng.standard_normal((n_frames, subspace_dim))
    noise = rng.standard_normal((n_frames, feature_dim))
    features = (geometry.centroids[labels]
                + np.einsum("nfs,ns->nf", geometry.class_bases[labels], latents)
                + noise_level * noise)
    if shift != 0.0:
        features = features + shift * geometry.shift_direction
    return features, labels


def generate(cfg: CorpusConfig) -> Corpus:
    """Deterministically generate a corpus from its config."""
    rng_geo = np.random.default_rng([cfg.seed, _TAG_GEOMETRY])
    centroids = rng_geo.standard_normal((cfg.n_classes, cfg.feature_dim))
    bases = np.empty((cfg.n_classes, cfg.feature_dim, cfg.subspace_dim))
    for k in range(cfg.n_classes):
        q, _ = np.linalg.qr(rng_geo.standard_normal((cfg.feature_dim,
                                                     cfg.subspace_dim)))
        bases[k] = q
    direction = rng_geo.standard_normal(cfg.feature_dim)
    direction /= np.linalg.norm(direction)
    geometry = CorpusGeometry(centroids=centroids, class_bases=bases,
                              shift_direction=direction)

    def split(tag: int, n: int, shift: float = 0.0):
        rng = np.random.default_rng([cfg.seed, tag])
        return _sample_split(rng, geometry, n, cfg.noise_level, shift)

    train_x, train_y = split(_TAG_TRAIN, cfg.frames_train)
    dev_x, dev_y = split(_TAG_DEV, cfg.frames_dev)
    test_x, test_y = split(_TAG_TEST, cfg.frames_test)
    same_x, _ = split(_TAG_POOL_SAME, cfg.frames_untranscribed)
    shifted_x, _ = split(_TAG_POOL_SHIFTED, cfg.frames_untranscribed,
                         shift=cfg.domain_shift)
    return Corpus(config=cfg, geometry=geometry,
                  train_features=train_x, train_labels=train_y,
                  dev_features=dev_x, dev_labels=dev_y,
                  test_features=test_x, test_labels=test_y,
                  pools={POOL_SAME_DOMAIN: same_x, POOL_SHIFTED: shifted_x})


def bayes_posteriors(corpus: Corpus, features) -> np.ndarray:
    """True-generative-model class posteriors for the given feature rows.

    Per class the marginal is Gaussian with covariance
    ``basis @ basis.T + noise_level**2 * I`` (floored to keep the density
    finite when noise_level is 0) and uniform class priors.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != corpus.config.feature_dim:
        raise RejectedInputError("features do not match the corpus feature_dim")
    geo = corpus.geometry
    n_classes, feature_dim, _ = geo.class_bases.shape
    var = max(corpus.config.noise_level ** 2, _SINGULAR_NOISE_FLOOR)
    log_liks = np.empty((features.shape[0], n_classes))
    for k in range(n_classes):
        cov = geo.class_bases[k] @ geo.class_bases[k].T + var * np.eye(feature_dim)
        chol = np.linalg.cholesky(cov)
        diff = features - geo.centroids[k]
        solved = np.linalg.solve(chol, diff.T)
        maha = (solved ** 2).sum(axis=0)
        log_det = 2.0 * np.log(np.diag(chol)).sum()
        log_liks[:, k] = -0.5 * (maha + log_det)
    shifted = log_liks - log_liks.max(axis=1, keepdims=True)
    probs = np.exp(shifted)
    return probs / probs.sum(axis=1, keepdims=True)


def oracle_bayes_accuracy(corpus: Corpus) -> float:
    """Accuracy of the true generative classifier on the test split."""
    if corpus.test_features.shape[0] == 0:
        raise RejectedInputError("corpus has no test frames")
    probs = bayes_posteriors(corpus, corpus.test_features)
    preds = np.argmax(probs, axis=1)
    return float(np.mean(preds == corpus.test_labels))
