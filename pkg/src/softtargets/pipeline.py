"""System ladder: hard baseline, supervised enhancement, pool augmentation.

A ladder executes numbered systems in order. A system with no data sources
trains on hard one-hot targets from the ground-truth alignment; later
systems train on concatenations of soft target sets, each produced either
by supervised enhancement of an earlier system's train-split posteriors or
by a forward pass of an earlier system over an unlabeled pool. Every system
trains from a fresh random init under a seed derived from the master seed,
so a whole ladder is reproducible byte for byte (timing aside).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .corpus import Corpus
from .errors import DegenerateReconstructionError, RejectedInputError
from .lowrank import class_log_rank, compute_basis, enhance_matrix
from .mlp import (MlpModel, TrainConfig, forward_batch, frame_accuracy,
                  init_mlp, one_hot, train)
from .posteriors import (DEFAULT_DECIMALS, DEFAULT_LOG_EPS,
                         ClassPosteriorMatrix, group_by_class, quantize_rows)
from .sparse import learn_dictionary, sparse_code, sparse_reconstruct
from .validation import as_labels, as_matrix, as_posterior_rows, as_seed, require

METHODS = ("none", "pca", "sparse")
SOURCE_SUPERVISED = "supervised_enhancement"
SOURCE_POOL = "pool_forward_pass"
DEFAULT_SIGMA = 0.8
DEFAULT_LAMBDA = 0.1
DEFAULT_CLASS_CAP = 10_000
MAX_SYSTEM_ID = 5


@dataclass(frozen=True)
class DataSource:
    """One training-data contribution for a system."""

    kind: str
    from_system: int
    pool: str | None = None

    def __post_init__(self):
        require(self.kind in (SOURCE_SUPERVISED, SOURCE_POOL),
                f"unknown data source kind {self.kind!r}")
        require(self.from_system >= 0, "from_system must be >= 0")
        if self.kind == SOURCE_POOL:
            require(bool(self.pool), "pool_forward_pass needs a pool id")
        else:
            require(self.pool is None, "supervised_enhancement takes no pool id")

    def describe(self) -> str:
        if self.kind == SOURCE_POOL:
            return f"{self.pool}(FP-{self.from_system})"
        return f"train(SE-{self.from_system})"


@dataclass(frozen=True)
class SystemSpec:
    """One ladder row: id, enhancement method, and data sources."""

    system_id: int
    enhancement: str = "none"
    sigma: float = DEFAULT_SIGMA
    lam: float = DEFAULT_LAMBDA
    data_sources: tuple[DataSource, ...] = ()

    def __post_init__(self):
        require(0 <= self.system_id <= MAX_SYSTEM_ID,
                f"system_id must be in [0, {MAX_SYSTEM_ID}], got {self.system_id}")
        require(self.enhancement in METHODS,
                f"enhancement must be one of {METHODS}, got {self.enhancement!r}")
        require(0.0 < self.sigma <= 1.0, "sigma must be in (0, 1]")
        require(self.lam > 0.0, "lam must be positive")
        if self.system_id == 0:
            require(len(self.data_sources) == 0,
                    "system 0 trains on hard targets only")
        else:
            require(len(self.data_sources) >= 1,
                    f"system {self.system_id} needs at least one data source")
            for src in self.data_sources:
                require(src.from_system < self.system_id,
                        f"system {self.system_id} may only reference lower-numbered "
                        f"systems, got {src.from_system}")

    def describe(self) -> str:
        if not self.data_sources:
            return "train(hard)"
        return " + ".join(src.describe() for src in self.data_sources)


@dataclass(frozen=True)
class EnhanceResult:
    """Soft targets plus the per-class models and rank bookkeeping."""

    targets: np.ndarray
    method: str
    models: dict = field(compare=False)
    rank_before: dict[int, int] = field(default_factory=dict)
    rank_after: dict[int, int] = field(default_factory=dict)
    retained_rank: dict[int, int] = field(default_factory=dict)
    warnings: tuple[str, ...] = ()


def run_system0(corpus: Corpus, train_cfg: TrainConfig,
                hidden_sizes=(64, 64)) -> tuple[MlpModel, np.ndarray]:
    """Hard-target baseline plus its forward-pass posteriors on the train split."""
    if corpus.train_features.shape[0] == 0:
        raise RejectedInputError("corpus has no labeled train frames")
    n_classes = corpus.config.n_classes
    targets = one_hot(corpus.train_labels, n_classes)
    model = init_mlp((corpus.config.feature_dim,
                      *tuple(int(h) for h in hidden_sizes), n_classes),
                     seed=train_cfg.seed)
    trained, _ = train(model, corpus.train_features, targets, train_cfg)
    return trained, forward_batch(trained, corpus.train_features)


def supervised_enhance(posteriors, labels, method: str,
                       sigma: float = DEFAULT_SIGMA, lam: float = DEFAULT_LAMBDA,
                       *, cap: int = DEFAULT_CLASS_CAP, seed: int = 0,
                       decimals: int = DEFAULT_DECIMALS,
                       eps: float = DEFAULT_LOG_EPS,
                       n_atoms: int | None = None, dict_epochs: int = 5,
                       dict_batch: int = 32) -> EnhanceResult:
    """Build per-class models from labeled posteriors and enhance them.

    Every posterior is enhanced with its labeled class's model, then
    quantized for storage. Method ``none`` returns the quantized posteriors
    unchanged. Classes with fewer than 2 frames pass through unenhanced with
    a recorded warning, as do frames whose sparse reconstruction degenerates.
    """
    X = as_posterior_rows(posteriors, "posteriors")
    y = as_labels(labels, n_classes=X.shape[1], name="labels")
    if X.shape[0] != y.shape[0]:
        raise RejectedInputError("posteriors and labels lengths differ")
    require(method in METHODS, f"method must be one of {METHODS}, got {method!r}")
    if method == "none":
        return EnhanceResult(targets=quantize_rows(X, decimals), method=method,
                             models={})

    groups = group_by_class(X, y, cap=cap, seed=seed)
    models: dict[int, object] = {}
    warnings: list[str] = []
    rank_before: dict[int, int] = {}
    rank_after: dict[int, int] = {}
    retained: dict[int, int] = {}

    for k, cpm in sorted(groups.items()):
        if cpm.n_frames < 2:
            warnings.append(f"class {k}: {cpm.n_frames} frame(s), passed through")
            continue
        rank_before[k] = class_log_rank(cpm, fraction=0.95, eps=eps)
        if method == "pca":
            basis = compute_basis(cpm, sigma=sigma, eps=eps)
            models[k] = basis
            retained[k] = basis.rank
        else:
            dictionary = learn_dictionary(cpm, n_atoms=n_atoms, lam=lam,
                                          epochs=dict_epochs,
                                          batch_size=dict_batch, seed=seed)
            models[k] = dictionary
            retained[k] = dictionary.n_atoms

    enhanced = np.array(X, copy=True)
    degenerate_frames = 0
    for k, model in models.items():
        idx = np.flatnonzero(y == k)
        if method == "pca":
            block = ClassPosteriorMatrix(k, X[idx].T)
            enhanced[idx] = enhance_matrix(block, model, eps=eps).matrix.T
        else:
            for i in idx:
                code = sparse_code(X[i], model, lam=lam)
                try:
                    enhanced[i] = sparse_reconstruct(code, model)
                except DegenerateReconstructionError:
                    degenerate_frames += 1
        rank_after[k] = class_log_rank(
            ClassPosteriorMatrix(k, enhanced[idx].T), fraction=0.95, eps=eps)
    if degenerate_frames:
        warnings.append(
            f"{degenerate_frames} frame(s) had degenerate reconstructions, "
            "passed through")

    return EnhanceResult(targets=quantize_rows(enhanced, decimals), method=method,
                         models=models, rank_before=rank_before,
                         rank_after=rank_after, retained_rank=retained,
                         warnings=tuple(warnings))


def forward_pass_targets(model: MlpModel, features,
                         decimals: int = DEFAULT_DECIMALS) -> np.ndarray:
    """Quantized forward-pass posteriors for unlabeled frames; no enhancement."""
    X = as_matrix(features, "features")
    probs = forward_batch(model, X)
    return quantize_rows(probs, decimals)


@dataclass(frozen=True)
class RunReport:
    """Ladder outcome: config echo, per-system metrics, timing."""

    master_seed: int
    hidden_sizes: tuple[int, ...]
    corpus_config: dict
    train_config: dict
    systems: tuple[dict, ...]
    timing: dict = field(compare=False)

    def to_dict(self, include_timing: bool = True) -> dict:
        out = {
            "master_seed": self.master_seed,
            "hidden_sizes": list(self.hidden_sizes),
            "corpus_config": dict(self.corpus_config),
            "train_config": dict(self.train_config),
            "systems": [dict(s) for s in self.systems],
        }
        if include_timing:
            out["timing"] = dict(self.timing)
        return out

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(self.to_dict(include_timing), sort_keys=True,
                          indent=2) + "\n"

    def table(self) -> str:
        return format_table([self.to_dict()])


def _method_label(entry: dict) -> str:
    method = entry["enhancement"]
    if method == "pca":
        return f"pca(sigma={100 * entry['sigma']:g})"
    if method == "sparse":
        return f"sparse(lambda={entry['lam']:g})"
    return "non-enhanced"


def format_table(reports: list[dict]) -> str:
    """Plain-text accuracy table, one row per system, one column per report."""
    require(len(reports) >= 1, "need at least one report")
    headers = []
    for i, rep in enumerate(reports):
        label = sorted({_method_label(s) for s in rep["systems"]
                        if s["system_id"] != 0})
        headers.append(" / ".join(label) if label else f"run {i}")
    rows: dict[int, dict] = {}
    for i, rep in enumerate(reports):
        for s in rep["systems"]:
            row = rows.setdefault(s["system_id"],
                                  {"desc": s["description"], "cells": {}})
            row["cells"][i] = f"{s['test_accuracy']:.4f}"
    desc_width = max(len("Training data"), *(len(r["desc"]) for r in rows.values()))
    col_widths = [max(len(h), 8) for h in headers]
    lines = []
    header_cells = " | ".join(h.rjust(w) for h, w in zip(headers, col_widths))
    lines.append(f"{'System':>6}  {'Training data':<{desc_width}}  "
                 f"{header_cells}  (test frame accuracy)")
    lines.append("-" * len(lines[0]))
    for sid in sorted(rows):
        cells = " | ".join(rows[sid]["cells"].get(i, "-").rjust(w)
                           for i, w in enumerate(col_widths))
        lines.append(f"{sid:>6}  {rows[sid]['desc']:<{desc_width}}  {cells}")
    return "\n".join(lines) + "\n"


def _config_dict(obj) -> dict:
    out = {}
    for key, value in vars(obj).items():
        out[key] = value.item() if isinstance(value, np.generic) else value
    return out


def run_ladder(corpus: Corpus, specs, train_cfg: TrainConfig,
               hidden_sizes=(64, 64), master_seed: int = 0,
               cap: int = DEFAULT_CLASS_CAP, decimals: int = DEFAULT_DECIMALS,
               eps: float = DEFAULT_LOG_EPS, n_atoms: int | None = None,
               dict_epochs: int = 5, dict_batch: int = 32) -> RunReport:
    """Execute systems in order and collect the report.

    Each system gets the derived seed ``master_seed XOR system_id`` for its
    init and shuffling, and trains from scratch on the concatenation of its
    source target sets. Supervised-enhancement and forward-pass target sets
    are cached within the run, keyed by their defining parameters.
    """
    master_seed = as_seed(master_seed, "master_seed")
    specs = tuple(specs)
    require(len(specs) >= 1, "ladder needs at least one system spec")
    seen: set[int] = set()
    for spec in specs:
        if spec.system_id in seen:
            raise RejectedInputError(f"duplicate system id {spec.system_id}")
        for src in spec.data_sources:
            if src.from_system not in seen:
                raise RejectedInputError(
                    f"system {spec.system_id} references system "
                    f"{src.from_system}, which has not run")
            if src.kind == SOURCE_POOL and src.pool not in corpus.pools:
                raise RejectedInputError(f"unknown pool {src.pool!r}")
        seen.add(spec.system_id)

    n_classes = corpus.config.n_classes
    sizes = (corpus.config.feature_dim,
             *tuple(int(h) for h in hidden_sizes), n_classes)
    models: dict[int, MlpModel] = {}
    train_posteriors: dict[int, np.ndarray] = {}
    se_cache: dict[tuple, EnhanceResult] = {}
    fp_cache: dict[tuple, np.ndarray] = {}
    entries = []
    per_system_seconds = {}
    t_start = time.perf_counter()

    def posteriors_of(system_id: int) -> np.ndarray:
        if system_id not in train_posteriors:
            train_posteriors[system_id] = forward_batch(
                models[system_id], corpus.train_features)
        return train_posteriors[system_id]

    for spec in specs:
        t0 = time.perf_counter()
        seed_n = master_seed ^ spec.system_id
        feature_blocks = []
        target_blocks = []
        enhancement_stats = []
        if not spec.data_sources:
            feature_blocks.append(corpus.train_features)
            target_blocks.append(one_hot(corpus.train_labels, n_classes))
        for src in spec.data_sources:
            if src.kind == SOURCE_SUPERVISED:
                key = (src.from_system, spec.enhancement, spec.sigma, spec.lam)
                if key not in se_cache:
                    se_cache[key] = supervised_enhance(
                        posteriors_of(src.from_system), corpus.train_labels,
                        spec.enhancement, sigma=spec.sigma, lam=spec.lam,
                        cap=cap, seed=master_seed ^ src.from_system,
                        decimals=decimals, eps=eps, n_atoms=n_atoms,
                        dict_epochs=dict_epochs, dict_batch=dict_batch)
                result = se_cache[key]
                feature_blocks.append(corpus.train_features)
                target_blocks.append(result.targets)
                enhancement_stats.append({
                    "source": src.describe(),
                    "method": result.method,
                    "rank_before": {str(k): v for k, v in result.rank_before.items()},
                    "rank_after": {str(k): v for k, v in result.rank_after.items()},
                    "retained_rank": {str(k): v
                                      for k, v in result.retained_rank.items()},
                    "warnings": list(result.warnings),
                })
            else:
                key = (src.pool, src.from_system)
                if key not in fp_cache:
                    fp_cache[key] = forward_pass_targets(
                        models[src.from_system], corpus.pools[src.pool],
                        decimals=decimals)
                feature_blocks.append(corpus.pools[src.pool])
                target_blocks.append(fp_cache[key])

        features = np.vstack(feature_blocks)
        targets = np.vstack(target_blocks)
        cfg = replace(train_cfg, seed=seed_n)
        model = init_mlp(sizes, seed=seed_n)
        trained, history = train(model, features, targets, cfg)
        models[spec.system_id] = trained

        n_total = features.shape[0]
        n_holdout = min(int(n_total * cfg.holdout_fraction), n_total - 1)
        entries.append({
            "system_id": spec.system_id,
            "enhancement": spec.enhancement,
            "sigma": spec.sigma,
            "lam": spec.lam,
            "seed": seed_n,
            "description": spec.describe(),
            "data_sources": [
                {"kind": s.kind, "from_system": s.from_system, "pool": s.pool}
                for s in spec.data_sources],
            "frames_total": int(n_total),
            "frames_holdout": int(n_holdout),
            "frames_trained": int(n_total - n_holdout),
            "test_accuracy": frame_accuracy(trained, corpus.test_features,
                                            corpus.test_labels),
            "dev_accuracy": (frame_accuracy(trained, corpus.dev_features,
                                            corpus.dev_labels)
                             if corpus.dev_features.shape[0] else None),
            "final_train_loss": history.train_loss[-1] if history.train_loss
            else None,
            "final_holdout_loss": history.holdout_loss[-1] if history.holdout_loss
            else None,
            "enhancement_stats": enhancement_stats,
        })
        per_system_seconds[str(spec.system_id)] = time.perf_counter() - t0

    timing = {"total_seconds": time.perf_counter() - t_start,
              "per_system_seconds": per_system_seconds}
    return RunReport(master_seed=master_seed,
                     hidden_sizes=tuple(int(h) for h in hidden_sizes),
                     corpus_config=_config_dict(corpus.config),
                     train_config=_config_dict(train_cfg),
                     systems=tuple(entries),
                     timing=timing)
