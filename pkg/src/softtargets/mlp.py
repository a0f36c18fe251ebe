"""Feed-forward softmax classifier trainable with hard or soft targets.

Hidden layers use the rectifier; the output layer is a softmax. Training is
plain mini-batch SGD on the soft cross-entropy, with a seeded shuffle and a
seeded holdout split whose loss is tracked but never gates training. All
arithmetic is float64 and every routine is deterministic given its seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .errors import RejectedInputError
from .validation import (as_labels, as_matrix, as_posterior, as_seed,
                         as_vector, require)

PRED_LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class MlpModel:
    """Weights of a rectifier MLP with a softmax output.

    ``weights[i]`` maps ``layer_sizes[i]`` inputs to ``layer_sizes[i + 1]``
    outputs and is shaped (fan_out, fan_in). Instances are treated as
    immutable: training copies, never mutates.
    """

    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    seed: int
    epochs_trained: int = 0

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_classes(self) -> int:
        return self.layer_sizes[-1]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.2
    batch_size: int = 64
    epochs: int = 15
    seed: int = 0
    shuffle: bool = True
    holdout_fraction: float = 0.1


@dataclass(frozen=True)
class TrainHistory:
    """End-of-epoch mean cross-entropies; ``train_loss`` is the loss history."""

    train_loss: tuple[float, ...]
    holdout_loss: tuple[float, ...]


def init_mlp(layer_sizes, seed: int = 0) -> MlpModel:
    """Seeded symmetric-uniform init scaled by 1/sqrt(fan_in); zero biases.

    Weight magnitudes are bounded by sqrt(6 / fan_in).
    """
    sizes = tuple(int(s) for s in layer_sizes)
    require(len(sizes) >= 3, "need input, at least one hidden, and output sizes")
    require(all(s >= 1 for s in sizes), f"all layer sizes must be >= 1, got {sizes}")
    seed = as_seed(seed)
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = math.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(layer_sizes=sizes, weights=weights, biases=biases, seed=seed)


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def forward_batch(model: MlpModel, X) -> np.ndarray:
    """Posterior rows for a batch of feature rows."""
    X = as_matrix(X, "X")
    if X.shape[1] != model.n_inputs:
        raise RejectedInputError(
            f"features have dim {X.shape[1]}, model expects {model.n_inputs}")
    if X.shape[0] == 0:
        return np.zeros((0, model.n_classes))
    a = X
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w.T + b
        a = z if i == last else np.maximum(z, 0.0)
    return _softmax_rows(a)


def forward(model: MlpModel, x) -> np.ndarray:
    """Posterior for a single feature vector."""
    x = as_vector(x, "x")
    return forward_batch(model, x[None, :])[0]


def soft_cross_entropy(pred, target) -> float:
    """Cross-entropy of a predicted posterior against a target distribution.

    Predictions are floored at 1e-12 inside the log.
    """
    pred = as_posterior(pred, "pred")
    target = as_posterior(target, "target")
    if pred.shape[0] != target.shape[0]:
        raise RejectedInputError("pred and target lengths differ")
    return float(-(target * np.log(np.maximum(pred, PRED_LOG_FLOOR))).sum())


def _mean_cross_entropy(model: MlpModel, X: np.ndarray, T: np.ndarray) -> float:
    probs = forward_batch(model, X)
    losses = -(T * np.log(np.maximum(probs, PRED_LOG_FLOOR))).sum(axis=1)
    return float(losses.mean())


def one_hot(labels, n_classes: int) -> np.ndarray:
    labels = as_labels(labels, n_classes=n_classes)
    out = np.zeros((labels.shape[0], n_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def train(model: MlpModel, features, targets,
          cfg: TrainConfig) -> tuple[MlpModel, TrainHistory]:
    """Mini-batch SGD against soft targets; returns a new model.

    A seeded fraction of the data is held out: its loss is recorded per
    epoch but it never influences the updates. Loss history entries are
    end-of-epoch full passes over the training portion in file order, so
    they do not depend on the shuffle. Deterministic given ``cfg``.
    """
    X = as_matrix(features, "features")
    T = as_matrix(targets, "targets")
    if X.shape[0] != T.shape[0]:
        raise RejectedInputError(
            f"got {X.shape[0]} feature rows but {T.shape[0]} target rows")
    if X.shape[0] == 0:
        raise RejectedInputError("cannot train on an empty dataset")
    if X.shape[1] != model.n_inputs or T.shape[1] != model.n_classes:
        raise RejectedInputError("feature/target dims do not match the model")
    require(cfg.learning_rate >= 0.0, "learning_rate must be nonnegative")
    require(cfg.batch_size >= 1, "batch_size must be >= 1")
    require(cfg.epochs >= 0, "epochs must be >= 0")
    require(0.0 <= cfg.holdout_fraction < 1.0, "holdout_fraction must be in [0, 1)")

    rng = np.random.default_rng(as_seed(cfg.seed))
    n = X.shape[0]
    n_hold = min(int(n * cfg.holdout_fraction), n - 1)
    perm = rng.permutation(n)
    hold_idx = np.sort(perm[:n_hold])
    train_idx = np.sort(perm[n_hold:])
    Xtr, Ttr = X[train_idx], T[train_idx]
    Xho, Tho = X[hold_idx], T[hold_idx]

    weights = [w.copy() for w in model.weights]
    biases = [b.copy() for b in model.biases]
    n_tr = Xtr.shape[0]
    last = len(weights) - 1
    train_losses = []
    holdout_losses = []

    for _ in range(cfg.epochs):
        order = rng.permutation(n_tr) if cfg.shuffle else np.arange(n_tr)
        for start in range(0, n_tr, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb, tb = Xtr[idx], Ttr[idx]
            # forward, keeping activations for the backward pass
            activations = [xb]
            preacts = []
            a = xb
            for i, (w, b) in enumerate(zip(weights, biases)):
                z = a @ w.T + b
                preacts.append(z)
                a = z if i == last else np.maximum(z, 0.0)
                activations.append(a)
            probs = _softmax_rows(activations[-1])
            delta = (probs - tb) / xb.shape[0]
            for i in range(last, -1, -1):
                grad_w = delta.T @ activations[i]
                grad_b = delta.sum(axis=0)
                if i > 0:
                    delta = (delta @ weights[i]) * (preacts[i - 1] > 0.0)
                weights[i] -= cfg.learning_rate * grad_w
                biases[i] -= cfg.learning_rate * grad_b
        snapshot = MlpModel(model.layer_sizes, weights, biases, model.seed)
        train_losses.append(_mean_cross_entropy(snapshot, Xtr, Ttr))
        holdout_losses.append(
            _mean_cross_entropy(snapshot, Xho, Tho) if n_hold else float("nan"))

    trained = MlpModel(layer_sizes=model.layer_sizes,
                       weights=weights, biases=biases, seed=model.seed,
                       epochs_trained=model.epochs_trained + cfg.epochs)
    return trained, TrainHistory(tuple(train_losses), tuple(holdout_losses))


def frame_accuracy(model: MlpModel, features, labels) -> float:
    """Fraction of frames whose argmax posterior matches the label.

    Argmax ties break toward the lowest class index.
    """
    X = as_matrix(features, "features")
    y = as_labels(labels, n_classes=model.n_classes)
    if X.shape[0] != y.shape[0]:
        raise RejectedInputError("features and labels lengths differ")
    if X.shape[0] == 0:
        raise RejectedInputError("cannot score an empty dataset")
    preds = np.argmax(forward_batch(model, X), axis=1)
    return float(np.mean(preds == y))


class SoftTargetMlp(BaseEstimator, ClassifierMixin):
    """Estimator wrapper around :func:`init_mlp` / :func:`train`.

    ``fit`` accepts integer labels (converted to one-hot) or an (n, K) array
    of target distributions; in the latter case ``n_classes`` is taken from
    the target width.
    """

    def __init__(self, hidden_sizes=(64, 64), learning_rate: float = 0.2,
                 batch_size: int = 64, epochs: int = 15, seed: int = 0,
                 shuffle: bool = True, holdout_fraction: float = 0.1):
        self.hidden_sizes = hidden_sizes
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed
        self.shuffle = shuffle
        self.holdout_fraction = holdout_fraction

    def fit(self, X, y):
        X = as_matrix(X, "X")
        y_arr = np.asarray(y)
        if y_arr.ndim == 1:
            labels = as_labels(y_arr, name="y")
            if labels.size == 0:
                raise RejectedInputError("cannot fit on an empty dataset")
            n_classes = int(labels.max()) + 1
            targets = one_hot(labels, n_classes)
        else:
            targets = as_matrix(y_arr, "y")
            n_classes = targets.shape[1]
        sizes = (X.shape[1], *tuple(int(h) for h in self.hidden_sizes), n_classes)
        cfg = TrainConfig(learning_rate=self.learning_rate,
                          batch_size=self.batch_size, epochs=self.epochs,
                          seed=self.seed, shuffle=self.shuffle,
                          holdout_fraction=self.holdout_fraction)
        model = init_mlp(sizes, seed=self.seed)
        self.model_, self.history_ = train(model, X, targets, cfg)
        self.classes_ = np.arange(n_classes)
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        if not hasattr(self, "model_"):
            raise NotFittedError("SoftTargetMlp is not fitted")
        return forward_batch(self.model_, X)

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)
