"""Command-line interface.

Subcommands walk the full pipeline: ``gen`` a corpus, ``train-hard`` the
baseline, ``dump-posteriors``, ``enhance`` them into soft targets,
``train-soft`` on target sets, ``fp-targets`` for unlabeled pools, run a
whole ``ladder`` from a JSON spec, and ``report`` accuracy tables.

Failures exit nonzero after printing a JSON error record to stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import storage
from .corpus import (POOL_SAME_DOMAIN, POOL_SHIFTED, Corpus, CorpusConfig,
                     CorpusGeometry, generate)
from .errors import RejectedInputError, SoftTargetsError
from .mlp import TrainConfig, forward_batch, frame_accuracy, init_mlp, train
from .pipeline import (DataSource, SystemSpec, forward_pass_targets,
                       format_table, run_ladder, supervised_enhance)
from .posteriors import DEFAULT_DECIMALS, DEFAULT_LOG_EPS
from .validation import require

_SPLITS = ("train", "dev", "test")


def _error_record(exc: Exception) -> str:
    return json.dumps({"error": {"type": type(exc).__name__,
                                 "message": str(exc)}}) + "\n"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        sys.stderr.write(_error_record(RejectedInputError(message)))
        raise SystemExit(2)


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise RejectedInputError(f"cannot load JSON from {path}: {exc}") from exc


def _corpus_config(data: dict, seed_override: int | None) -> CorpusConfig:
    known = {f.name for f in dataclasses.fields(CorpusConfig)}
    unknown = set(data) - known
    if unknown:
        raise RejectedInputError(f"unknown corpus config fields: {sorted(unknown)}")
    if seed_override is not None:
        data = {**data, "seed": seed_override}
    return CorpusConfig(**data)


def _train_config(args, seed: int) -> TrainConfig:
    return TrainConfig(learning_rate=args.learning_rate,
                       batch_size=args.batch_size, epochs=args.epochs,
                       seed=seed, shuffle=not args.no_shuffle,
                       holdout_fraction=args.holdout)


def _hidden_sizes(text: str) -> tuple[int, ...]:
    try:
        sizes = tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise RejectedInputError(f"bad hidden sizes {text!r}") from exc
    require(len(sizes) >= 1, "need at least one hidden layer size")
    return sizes


def _write_corpus(corpus: Corpus, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    for split in _SPLITS:
        feat = getattr(corpus, f"{split}_features")
        lab = getattr(corpus, f"{split}_labels")
        storage.write_matrix(out / f"{split}_features.sstm", feat)
        storage.write_alignment(out / f"{split}_labels.ssta", lab)
        files[f"{split}_features"] = f"{split}_features.sstm"
        files[f"{split}_labels"] = f"{split}_labels.ssta"
    for pool, feat in sorted(corpus.pools.items()):
        name = f"pool_{pool}_features.sstm"
        storage.write_matrix(out / name, feat)
        files[f"pool_{pool}_features"] = name
    storage.write_matrix(out / "geometry_centroids.sstm",
                         corpus.geometry.centroids)
    k, f, s = corpus.geometry.class_bases.shape
    storage.write_matrix(out / "geometry_bases.sstm",
                         corpus.geometry.class_bases.reshape(k, f * s))
    storage.write_matrix(out / "geometry_shift.sstm",
                         corpus.geometry.shift_direction[None, :])
    files["geometry"] = ["geometry_centroids.sstm", "geometry_bases.sstm",
                         "geometry_shift.sstm"]
    manifest = {"config": dataclasses.asdict(corpus.config), "files": files}
    _write_json(out / "manifest.json", manifest)
    return manifest


def _load_corpus(corpus_dir: str) -> Corpus:
    root = Path(corpus_dir)
    manifest = _load_json(root / "manifest.json")
    cfg = _corpus_config(manifest["config"], None)
    parts = {}
    for split in _SPLITS:
        parts[f"{split}_features"] = storage.read_matrix(
            root / f"{split}_features.sstm")
        parts[f"{split}_labels"] = storage.read_alignment(
            root / f"{split}_labels.ssta")
    pools = {}
    for pool in (POOL_SAME_DOMAIN, POOL_SHIFTED):
        pools[pool] = storage.read_matrix(root / f"pool_{pool}_features.sstm")
    centroids = storage.read_matrix(root / "geometry_centroids.sstm")
    bases = storage.read_matrix(root / "geometry_bases.sstm").reshape(
        cfg.n_classes, cfg.feature_dim, cfg.subspace_dim)
    shift = storage.read_matrix(root / "geometry_shift.sstm")[0]
    geometry = CorpusGeometry(centroids=centroids, class_bases=bases,
                              shift_direction=shift)
    return Corpus(config=cfg, geometry=geometry, pools=pools, **parts)


def _cmd_gen(args) -> int:
    data = _load_json(args.config) if args.config else {}
    cfg = _corpus_config(data, args.seed)
    corpus = generate(cfg)
    _write_corpus(corpus, Path(args.out))
    print(f"wrote corpus ({cfg.n_classes} classes, {cfg.frames_train} train frames) "
          f"to {args.out}")
    return 0


def _cmd_train_hard(args) -> int:
    corpus = _load_corpus(args.corpus)
    cfg = _train_config(args, args.seed)
    n_classes = corpus.config.n_classes
    sizes = (corpus.config.feature_dim, *_hidden_sizes(args.hidden), n_classes)
    model = init_mlp(sizes, seed=args.seed)
    from .mlp import one_hot

    trained, history = train(model, corpus.train_features,
                             one_hot(corpus.train_labels, n_classes), cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    storage.write_model(out / "model.ssnn", trained)
    report = {
        "layer_sizes": list(sizes),
        "train_config": dataclasses.asdict(cfg),
        "train_loss": list(history.train_loss),
        "holdout_loss": list(history.holdout_loss),
        "dev_accuracy": frame_accuracy(trained, corpus.dev_features,
                                       corpus.dev_labels)
        if corpus.dev_features.shape[0] else None,
        "test_accuracy": frame_accuracy(trained, corpus.test_features,
                                        corpus.test_labels)
        if corpus.test_features.shape[0] else None,
    }
    _write_json(out / "train_report.json", report)
    print(f"trained hard-target model; test accuracy "
          f"{report['test_accuracy']}")
    return 0


def _cmd_dump_posteriors(args) -> int:
    model = storage.read_model(args.model)
    features = storage.read_matrix(args.features)
    storage.write_matrix(args.out, forward_batch(model, features))
    print(f"wrote {features.shape[0]} posteriors to {args.out}")
    return 0


def _cmd_enhance(args) -> int:
    posteriors = storage.read_matrix(args.posteriors)
    labels = storage.read_alignment(args.align)
    sigma = args.sigma / 100.0
    n_atoms = args.atoms if args.atoms else None
    result = supervised_enhance(posteriors, labels, args.method, sigma=sigma,
                                lam=getattr(args, "lambda"), cap=args.cap,
                                seed=args.seed, decimals=args.decimals,
                                eps=args.eps, n_atoms=n_atoms,
                                dict_epochs=args.dict_epochs,
                                dict_batch=args.dict_batch)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    storage.write_targets(out / "targets.sstt", result.targets)
    model_files = {}
    for k, model in sorted(result.models.items()):
        if args.method == "pca":
            name = f"basis_{k:04d}.sseb"
            storage.write_basis(out / name, model)
        else:
            name = f"dictionary_{k:04d}.ssdc"
            storage.write_dictionary(out / name, model)
        model_files[str(k)] = name
    report = {
        "method": args.method,
        "sigma": sigma,
        "lambda": getattr(args, "lambda"),
        "n_frames": int(result.targets.shape[0]),
        "rank_before": {str(k): v for k, v in result.rank_before.items()},
        "rank_after": {str(k): v for k, v in result.rank_after.items()},
        "retained_rank": {str(k): v for k, v in result.retained_rank.items()},
        "warnings": list(result.warnings),
        "model_files": model_files,
    }
    _write_json(out / "enhance_report.json", report)
    print(f"wrote {result.targets.shape[0]} enhanced targets to {out}")
    return 0


def _cmd_train_soft(args) -> int:
    corpus = _load_corpus(args.corpus) if args.corpus else None
    feature_paths = args.features or []
    target_paths = args.targets or []
    if corpus is not None and not feature_paths:
        feature_paths = [None]  # sentinel: corpus train split
    if len(feature_paths) != len(target_paths):
        raise RejectedInputError(
            f"got {len(feature_paths)} feature files but {len(target_paths)} "
            "target files")
    if not target_paths:
        raise RejectedInputError("train-soft needs at least one target set")
    blocks = []
    for fpath, tpath in zip(feature_paths, target_paths):
        if fpath is None:
            feats = corpus.train_features
        else:
            feats = storage.read_matrix(fpath)
        targets = storage.read_targets(tpath)
        if feats.shape[0] != targets.shape[0]:
            raise RejectedInputError(
                f"{fpath or 'corpus train split'} has {feats.shape[0]} frames but "
                f"{tpath} has {targets.shape[0]} targets")
        blocks.append((feats, targets))
    features = np.vstack([b[0] for b in blocks])
    targets = np.vstack([b[1] for b in blocks])
    cfg = _train_config(args, args.seed)
    sizes = (features.shape[1], *_hidden_sizes(args.hidden), targets.shape[1])
    model = init_mlp(sizes, seed=args.seed)
    trained, history = train(model, features, targets, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    storage.write_model(out / "model.ssnn", trained)
    report = {
        "layer_sizes": list(sizes),
        "train_config": dataclasses.asdict(cfg),
        "n_frames": int(features.shape[0]),
        "train_loss": list(history.train_loss),
        "holdout_loss": list(history.holdout_loss),
    }
    if corpus is not None and corpus.test_features.shape[0]:
        report["test_accuracy"] = frame_accuracy(trained, corpus.test_features,
                                                 corpus.test_labels)
        report["dev_accuracy"] = (frame_accuracy(trained, corpus.dev_features,
                                                 corpus.dev_labels)
                                  if corpus.dev_features.shape[0] else None)
    _write_json(out / "train_report.json", report)
    print(f"trained soft-target model on {features.shape[0]} frames")
    return 0


def _cmd_fp_targets(args) -> int:
    model = storage.read_model(args.model)
    features = storage.read_matrix(args.features)
    targets = forward_pass_targets(model, features, decimals=args.decimals)
    storage.write_targets(args.out, targets)
    print(f"wrote {targets.shape[0]} forward-pass targets to {args.out}")
    return 0


def _parse_systems(raw) -> tuple[SystemSpec, ...]:
    specs = []
    for item in raw:
        sources = tuple(
            DataSource(kind=s["kind"], from_system=s["from_system"],
                       pool=s.get("pool"))
            for s in item.get("data_sources", []))
        specs.append(SystemSpec(system_id=item["id"],
                                enhancement=item.get("enhancement", "none"),
                                sigma=item.get("sigma", 0.8),
                                lam=item.get("lam", 0.1),
                                data_sources=sources))
    return tuple(specs)


def _cmd_ladder(args) -> int:
    spec = _load_json(args.spec)
    if "corpus_dir" in spec:
        corpus = _load_corpus(spec["corpus_dir"])
    else:
        corpus = generate(_corpus_config(spec.get("corpus", {}), None))
    master_seed = args.seed if args.seed is not None else spec.get("master_seed", 0)
    train_data = spec.get("train", {})
    cfg = TrainConfig(**train_data)
    systems = _parse_systems(spec.get("systems", []))
    if not systems:
        raise RejectedInputError("ladder spec has no systems")
    report = run_ladder(corpus, systems, cfg,
                        hidden_sizes=tuple(spec.get("hidden", [64, 64])),
                        master_seed=master_seed,
                        cap=spec.get("cap", 10_000),
                        decimals=args.decimals, eps=args.eps,
                        n_atoms=spec.get("n_atoms"),
                        dict_epochs=spec.get("dict_epochs", 5),
                        dict_batch=spec.get("dict_batch", 32))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json())
    table = report.table()
    (out / "table.txt").write_text(table)
    print(table, end="")
    return 0


def _cmd_report(args) -> int:
    reports = [_load_json(Path(run) / "report.json") for run in args.run]
    print(format_table(reports), end="")
    return 0


def _add_train_flags(p: _Parser) -> None:
    p.add_argument("--hidden", default="64,64",
                   help="comma-separated hidden layer sizes")
    p.add_argument("--learning-rate", type=float, default=0.2)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--epochs", type=int, default=15)
    p.add_argument("--no-shuffle", action="store_true")
    p.add_argument("--holdout", type=float, default=0.1,
                   help="held-out fraction whose loss is tracked")


def build_parser() -> _Parser:
    parser = _Parser(prog="softtargets",
                     description="Low-rank and sparse soft-target pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic corpus")
    p.add_argument("--config", help="JSON file of corpus config fields")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("train-hard", help="train the hard-target baseline")
    p.add_argument("--corpus", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=_cmd_train_hard)

    p = sub.add_parser("dump-posteriors",
                       help="forward-pass posteriors for a feature matrix")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_dump_posteriors)

    p = sub.add_parser("enhance", help="build per-class soft targets")
    p.add_argument("--method", choices=["pca", "sparse", "none"], required=True)
    p.add_argument("--posteriors", required=True)
    p.add_argument("--align", required=True)
    p.add_argument("--sigma", type=float, default=80.0,
                   help="retained variance percentage")
    p.add_argument("--lambda", type=float, default=0.1)
    p.add_argument("--atoms", type=int, default=0,
                   help="dictionary width (0: scale with class count)")
    p.add_argument("--cap", type=int, default=10_000)
    p.add_argument("--dict-epochs", type=int, default=5)
    p.add_argument("--dict-batch", type=int, default=32)
    p.add_argument("--decimals", type=int, default=DEFAULT_DECIMALS)
    p.add_argument("--eps", type=float, default=DEFAULT_LOG_EPS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_enhance)

    p = sub.add_parser("train-soft", help="train on soft target sets")
    p.add_argument("--corpus", help="corpus dir (for train split and scoring)")
    p.add_argument("--features", action="append",
                   help="feature matrix file (repeatable, pairs with --targets)")
    p.add_argument("--targets", action="append", required=True,
                   help="target set file (repeatable)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=_cmd_train_soft)

    p = sub.add_parser("fp-targets",
                       help="quantized forward-pass targets for unlabeled frames")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--decimals", type=int, default=DEFAULT_DECIMALS)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fp_targets)

    p = sub.add_parser("ladder", help="run a system ladder from a JSON spec")
    p.add_argument("--spec", required=True)
    p.add_argument("--seed", type=int, default=None,
                   help="override the spec's master seed")
    p.add_argument("--decimals", type=int, default=DEFAULT_DECIMALS)
    p.add_argument("--eps", type=float, default=DEFAULT_LOG_EPS)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ladder)

    p = sub.add_parser("report", help="print the accuracy table of ladder runs")
    p.add_argument("--run", action="append", required=True,
                   help="ladder output dir (repeatable)")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SoftTargetsError as exc:
        sys.stderr.write(_error_record(exc))
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        sys.stderr.write(_error_record(exc))
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
