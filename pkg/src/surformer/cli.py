"""Command-line entry point (``surformer <subcommand> ...``)."""

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import data as data_mod
from .bench import LatencyReport, benchmark_inference
from .errors import SurformerError
from .features import FEATURE_NAMES, PRESSURE_FEATURES, TEXTURE_FEATURES, read_feature_csv, write_feature_csv
from .forest import ForestConfig, gini_importance, fit_forest, rank_feature_sets, rank_features
from .forest import write_importance_csv
from .metrics import MetricsReport
from .pca import fit_pca, load_embeddings, save_embeddings, save_pca
from .pipeline import ExperimentConfig, TrainedPipeline, dataset_features, evaluate_pipeline, train_pipeline
from .report import emit_report, format_table, table_rows

log = logging.getLogger("surformer")

SEED_ENV = "SURFORMER_SEED"


def resolve_seed(cli_seed):
    """``SURFORMER_SEED`` wins over ``--seed`` when set."""
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise SurformerError(f"{SEED_ENV}={env!r} is not an integer")
    return cli_seed


def _write_json(path, payload):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def _load_inputs(data_dir, features_csv=None, need_embeddings=True):
    """Labels, (N, 10) feature table and embeddings for an archive directory."""
    ds = data_mod.load_archive(data_dir)
    if features_csv:
        _, labels, X = read_feature_csv(features_csv)
        if len(labels) != len(ds) or not np.array_equal(labels, ds.labels):
            raise SurformerError(f"{features_csv} does not match the samples in {data_dir}")
    else:
        t0 = time.monotonic()
        X = dataset_features(ds)
        log.info("extracted features for %d samples in %.1fs", len(ds), time.monotonic() - t0)
    E = ds.embeddings() if need_embeddings else None
    return ds.labels, X, E


def cmd_gen_data(args):
    seed = resolve_seed(args.seed)
    cfg = data_mod.DataConfig(seed=seed, image_size=args.image_size, vision_mode=args.vision)
    ds = data_mod.generate_dataset(cfg)
    if args.counts == "balanced":
        ds = data_mod.balance_by_augmentation(ds, data_mod.BALANCED_TARGET, seed=seed)
    data_mod.write_archive(ds, args.out)
    counts = dict(zip(data_mod.CLASS_NAMES, ds.class_counts().tolist()))
    print(f"wrote {len(ds)} samples to {args.out}: {counts}")


def cmd_extract_features(args):
    ds = data_mod.load_archive(args.data)
    X = dataset_features(ds)
    write_feature_csv(args.out, X, ds.labels)
    print(f"wrote {X.shape[0]} x {X.shape[1]} feature table to {args.out}")
    if args.embeddings_out:
        save_embeddings(args.embeddings_out, ds.embeddings(), binary=args.embeddings_out.endswith(".bin"))
        print(f"wrote embeddings to {args.embeddings_out}")


def cmd_rank_features(args):
    _, y, X = read_feature_csv(args.features)
    cfg = ForestConfig(n_trees=args.trees, seed=resolve_seed(args.seed))
    if args.mode == "joint":
        forest = fit_forest(X, y, cfg, feature_names=FEATURE_NAMES)
        imp = gini_importance(forest)
        write_importance_csv(args.out, FEATURE_NAMES, imp)
        top = [FEATURE_NAMES[i] for i in rank_features(imp, args.k)]
        print(f"top {args.k}: {', '.join(top)}")
        return
    groups = rank_feature_sets(X, y, FEATURE_NAMES,
                               {"texture": TEXTURE_FEATURES, "pressure": PRESSURE_FEATURES}, cfg)
    rows = sorted((score, name) for ranked in groups.values() for name, score in ranked)[::-1]
    names = [n for _, n in rows]
    write_importance_csv(args.out, names, np.array([s for s, _ in rows]))
    for group, ranked in groups.items():
        print(group + ": " + ", ".join(f"{n} {s:.4f}" for n, s in ranked))


def cmd_fit_pca(args):
    E = load_embeddings(args.embeddings)
    model = fit_pca(E, args.k)
    save_pca(args.out, model)
    ratio = model.explained_variance_ratio
    print(f"k={model.k}: cumulative explained variance {ratio.sum():.4f}")


def cmd_train(args):
    seed = resolve_seed(args.seed)
    experiment = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    labels, X, E = _load_inputs(args.data, args.features, need_embeddings=args.model == "surformer")
    t0 = time.monotonic()
    pipe, split, result = train_pipeline(args.model, X, labels, E, experiment, seed)
    pipe.save(args.out)
    msg = f"trained {pipe.name} in {time.monotonic() - t0:.1f}s"
    if result is not None:
        msg += f" ({len(result.history)} epochs, best epoch {result.best_epoch})"
    print(msg + f"; saved to {args.out}")


def cmd_evaluate(args):
    pipe = TrainedPipeline.load(args.model)
    labels, X, E = _load_inputs(args.data, args.features, need_embeddings=pipe.kind == "surformer")
    report = evaluate_pipeline(pipe, X, labels, E, args.split)
    _write_json(args.out, report.to_dict())
    print(f"{pipe.name} {args.split}: accuracy {report.accuracy:.4f} macro-F1 {report.macro_f1:.4f}")


def cmd_bench(args):
    pipe = TrainedPipeline.load(args.model)
    labels, X, E = _load_inputs(args.data, args.features, need_embeddings=pipe.kind == "surformer")
    rows = pipe.split(labels).test
    inputs = pipe.prepare(X[rows], None if E is None else E[rows])
    rep = benchmark_inference(pipe.predict_prepared, inputs, args.batch, args.warmup, args.repeats,
                              model=pipe.name, parameters=pipe.parameter_count())
    _write_json(args.out, rep.to_dict())
    print(f"{pipe.name}: median {rep.median_ms:.4f} ms/sample (p95 {rep.p95_ms:.4f})")


def cmd_report(args):
    metrics = [MetricsReport.from_dict(json.loads(Path(p).read_text())) for p in args.inputs.split(",") if p]
    latencies = []
    if args.latency:
        latencies = [LatencyReport.from_dict(json.loads(Path(p).read_text()))
                     for p in args.latency.split(",") if p]
    json_path, txt_path = emit_report(metrics, latencies, args.out)
    print(format_table(table_rows(metrics, latencies)), end="")
    print(f"wrote {json_path} and {txt_path}")


def build_parser():
    p = argparse.ArgumentParser(prog="surformer", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic paired dataset archive")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--counts", choices=("original", "balanced"), default="balanced")
    g.add_argument("--vision", choices=("images", "embeddings"), default="embeddings")
    g.add_argument("--image-size", type=int, default=224)
    g.set_defaults(func=cmd_gen_data)

    g = sub.add_parser("extract-features", help="write the tactile feature table")
    g.add_argument("--data", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--embeddings-out", help="also write visual embeddings (.bin for binary, else text)")
    g.set_defaults(func=cmd_extract_features)

    g = sub.add_parser("rank-features", help="random-forest importance ranking")
    g.add_argument("--features", required=True)
    g.add_argument("--mode", choices=("joint", "per-set"), default="joint")
    g.add_argument("--k", type=int, default=7)
    g.add_argument("--trees", type=int, default=200)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_rank_features)

    g = sub.add_parser("fit-pca", help="fit PCA on an embedding file")
    g.add_argument("--embeddings", required=True)
    g.add_argument("--k", type=int, default=64)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_fit_pca)

    g = sub.add_parser("train", help="train one model and save a model directory")
    g.add_argument("--model", choices=("surformer", "tactile-transformer", "rf"), required=True)
    g.add_argument("--data", required=True)
    g.add_argument("--config", help="JSON experiment config")
    g.add_argument("--features", help="precomputed feature CSV for the same archive")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_train)

    g = sub.add_parser("evaluate", help="metrics on a split of the archive")
    g.add_argument("--model", required=True)
    g.add_argument("--data", required=True)
    g.add_argument("--split", choices=("train", "val", "test"), default="test")
    g.add_argument("--features")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_evaluate)

    g = sub.add_parser("bench", help="inference latency on test-split batches")
    g.add_argument("--model", required=True)
    g.add_argument("--data", required=True)
    g.add_argument("--batch", type=int, default=100)
    g.add_argument("--warmup", type=int, default=10)
    g.add_argument("--repeats", type=int, default=50)
    g.add_argument("--features")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_bench)

    g = sub.add_parser("report", help="comparison table from metrics and latency files")
    g.add_argument("--in", dest="inputs", required=True, help="comma-separated metrics JSON files")
    g.add_argument("--latency", default="", help="comma-separated latency JSON files")
    g.add_argument("--out", required=True, help="output stem; .json and .txt are written")
    g.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        args.func(args)
    except (SurformerError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
