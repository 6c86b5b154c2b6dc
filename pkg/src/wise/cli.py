"""Command-line front end.

Subcommands mirror the module boundaries so every stage can be run and
inspected in isolation: encode (bits), sense (weight views), cluster
(both stages), explain (label frequencies to weights), evaluate
(metrics), synth (planted data), and run (everything).

Exit codes: 0 success, 2 configuration error, 3 data error, 4 internal
invariant violation or unexpected failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from .bep import BepConfig, dump_bep, encode_table
from .data_model import MixedTable, load_table
from .dfi import compute_explanations, faithfulness_eval, global_ranking
from .errors import ConfigError, DataError, InvariantError
from .forest import ForestParams
from .lofo import FeatureWeightVector, QdParams, views_matrix
from .metrics import evaluate
from .pipeline import (
    ABLATIONS,
    DEFAULT_SEED,
    PipelineConfig,
    make_views,
    one_hot_records,
    run_wise,
    stage_one,
    stage_two,
)
from .synth import SynthParams, write_synth

log = logging.getLogger(__name__)

WORKERS_ENV = "WISE_WORKERS"

# Config file keys.  The Greek names are the canonical spellings; the
# ASCII forms are accepted as aliases and normalized on load.
ALIASES = {"lambda_QD": "λ_QD", "alpha0": "α0", "beta0": "β0", "alpha": "α"}
CANONICAL_KEYS = (
    "B", "T", "m", "λ_QD", "k0", "α0", "β0", "K", "α",
    "seed", "eps", "max_iter", "explain_cap", "background",
    "nominal_mode", "hash_seed",
    "max_depth", "min_samples_leaf", "train_sample_frac", "features_per_split",
)


def config_to_dict(cfg: PipelineConfig) -> dict:
    return {
        "B": cfg.bep.B,
        "T": cfg.forest.T,
        "m": cfg.qd.m,
        "λ_QD": cfg.qd.lam,
        "k0": cfg.k0,
        "α0": cfg.alpha0,
        "β0": cfg.beta0,
        "K": cfg.K,
        "α": cfg.alpha,
        "seed": cfg.seed,
        "eps": cfg.eps,
        "max_iter": cfg.max_iter,
        "explain_cap": cfg.explain_cap,
        "background": cfg.background,
        "nominal_mode": cfg.bep.nominal_mode,
        "hash_seed": cfg.bep.hash_seed,
        "max_depth": cfg.forest.max_depth,
        "min_samples_leaf": cfg.forest.min_samples_leaf,
        "train_sample_frac": cfg.forest.train_sample_frac,
        "features_per_split": cfg.forest.features_per_split,
    }


def build_config(entries: dict) -> PipelineConfig:
    """PipelineConfig from a flat key->value mapping; unknown keys fail."""
    normalized = {}
    for key, value in entries.items():
        key = ALIASES.get(key, key)
        if key not in CANONICAL_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        if key in normalized:
            raise ConfigError(f"config key {key!r} given twice")
        normalized[key] = value

    base = config_to_dict(PipelineConfig())
    base.update(normalized)
    try:
        bep = BepConfig(B=int(base["B"]), nominal_mode=str(base["nominal_mode"]),
                        hash_seed=int(base["hash_seed"]))
        fps = base["features_per_split"]
        forest = ForestParams(
            T=int(base["T"]),
            max_depth=int(base["max_depth"]),
            min_samples_leaf=int(base["min_samples_leaf"]),
            train_sample_frac=float(base["train_sample_frac"]),
            features_per_split=None if fps is None else float(fps),
        )
        qd = QdParams(m=int(base["m"]), lam=float(base["λ_QD"]))
        return PipelineConfig(
            bep=bep, forest=forest, qd=qd,
            k0=int(base["k0"]), alpha0=float(base["α0"]), beta0=float(base["β0"]),
            K=int(base["K"]), alpha=float(base["α"]),
            seed=int(base["seed"]), eps=float(base["eps"]),
            max_iter=int(base["max_iter"]),
            explain_cap=int(base["explain_cap"]), background=int(base["background"]),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}") from exc


def load_config(path, overrides, seed_flag) -> PipelineConfig:
    entries = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path}: invalid JSON ({exc})") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"config file {path}: expected a JSON object")
        entries.update(raw)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        try:
            entries[key.strip()] = json.loads(value)
        except json.JSONDecodeError:
            entries[key.strip()] = value
    if seed_flag is not None:
        entries["seed"] = seed_flag
    return build_config(entries)


def _workers(args) -> int:
    if args.workers is not None:
        return max(1, args.workers)
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV}={env!r} is not an integer") from None
    return max(1, os.cpu_count() or 1)


def _load_input(args) -> tuple[MixedTable, list | None]:
    truth = getattr(args, "truth_column", None)
    return load_table(args.data, args.schema, truth_column=truth)


def write_labels(path, labels) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row_index", "cluster_id"])
        for i, c in enumerate(labels):
            writer.writerow([i, int(c)])


def read_labels(path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["row_index", "cluster_id"]:
            raise DataError(f"{path}: expected header row_index,cluster_id")
        out = []
        for row in reader:
            out.append(int(row[1]))
    return np.asarray(out, dtype=np.int64)


def write_views(path, views: list[FeatureWeightVector], names: list[str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["target", "rank", "tree", "quality"] + names)
        for v in views:
            writer.writerow(
                [names[v.target], v.rank, v.tree, repr(float(v.quality))]
                + [repr(float(x)) for x in v.w]
            )


def read_views(path, names: list[str]) -> list[FeatureWeightVector]:
    index = {name: j for j, name in enumerate(names)}
    views = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:4] != ["target", "rank", "tree", "quality"]:
            raise DataError(f"{path}: expected a weights dump header")
        if header[4:] != names:
            raise DataError(f"{path}: weight columns do not match the schema")
        for row in reader:
            views.append(
                FeatureWeightVector(
                    w=np.array([float(x) for x in row[4:]]),
                    target=index[row[0]],
                    tree=int(row[2]),
                    quality=float(row[3]),
                    rank=int(row[1]),
                )
            )
    if not views:
        raise DataError(f"{path}: no weight vectors")
    return views


def write_records(path, L: np.ndarray, k0: int) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k0", k0])
        writer.writerow(["row_index"] + [f"round_{r}" for r in range(L.shape[1])])
        for i in range(L.shape[0]):
            writer.writerow([i] + [int(x) for x in L[i]])


def read_records(path) -> tuple[np.ndarray, int]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None or first[0] != "k0":
            raise DataError(f"{path}: expected a record-matrix dump")
        k0 = int(first[1])
        next(reader)  # column header
        rows = [[int(x) for x in row[1:]] for row in reader]
    if not rows:
        raise DataError(f"{path}: no records")
    return np.asarray(rows, dtype=np.int64), k0


def explanation_report(table, result, top_q: int, faithfulness=None, with_instances=False) -> dict:
    ex = result.explanations
    names = [c.name for c in table.schema]
    sizes = np.bincount(result.labels, minlength=result.config.K)
    ranking, weights = global_ranking(ex.W_cluster, sizes)
    clusters = []
    for j in range(result.config.K):
        order = np.argsort(-ex.W_cluster[j], kind="stable")[:top_q]
        clusters.append(
            {
                "id": j,
                "size": int(sizes[j]),
                "top_features": [
                    {"feature": names[t], "weight": float(ex.W_cluster[j, t])}
                    for t in order
                ],
                "undiscriminated": j in ex.undiscriminated,
            }
        )
    report = {
        "consistency_deviation": ex.consistency_deviation,
        "global_ranking": [names[j] for j in ranking],
        "global_weights": [float(w) for w in weights],
        "clusters": clusters,
        "cluster_weights": ex.W_cluster.tolist(),
    }
    if faithfulness is not None:
        faithfulness = dict(faithfulness)
        faithfulness["ranking"] = [names[j] for j in faithfulness["ranking"]]
        report["faithfulness"] = faithfulness
    if with_instances:
        report["instance_weights"] = ex.W_instance.tolist()
    return report


def cmd_run(args) -> int:
    cfg = load_config(args.config, args.set, args.seed)
    workers = _workers(args)
    print(f"seed {cfg.seed}, {workers} workers, ablation {args.ablation}")
    table, truth = _load_input(args)
    result = run_wise(table, cfg, ablation=args.ablation, workers=workers)
    os.makedirs(args.out, exist_ok=True)
    names = [c.name for c in table.schema]

    write_labels(os.path.join(args.out, "labels.csv"), result.labels)
    write_views(os.path.join(args.out, "weights.csv"), result.views, names)

    payload = {
        "config": config_to_dict(cfg),
        "seed": cfg.seed,
        "ablation": args.ablation,
        "n": table.n,
        "d": table.d,
        "R": len(result.views),
        "final_labels": [int(x) for x in result.labels],
    }
    if args.dump_records:
        payload["record_matrix"] = result.L.tolist()
    with open(os.path.join(args.out, "result.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, ensure_ascii=False, indent=2)
        fh.write("\n")

    faith = None
    if args.faithfulness:
        sizes = np.bincount(result.labels, minlength=cfg.K)
        faith = faithfulness_eval(
            table, result.labels, result.explanations.W_cluster, sizes,
            top_k=[args.top_q], trials=args.trials, seed=cfg.seed,
        )
    report = explanation_report(table, result, args.top_q, faith, args.instances)
    with open(os.path.join(args.out, "explanations.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, ensure_ascii=False, indent=2)
        fh.write("\n")

    if truth is not None:
        metrics = evaluate(table, result.labels, truth, seed=cfg.seed)
        with open(os.path.join(args.out, "metrics.json"), "w", encoding="utf-8") as fh:
            json.dump(metrics, fh, ensure_ascii=False, indent=2)
            fh.write("\n")

    sizes = np.bincount(result.labels, minlength=cfg.K)
    print(f"K={cfg.K} sizes={sizes.tolist()} deviation={result.explanations.consistency_deviation:.2e}")
    for entry in report["clusters"]:
        tops = ", ".join(f"{t['feature']}={t['weight']:.3f}" for t in entry["top_features"])
        print(f"  cluster {entry['id']} (n={entry['size']}): {tops}")
    if truth is not None:
        print(f"ARI={metrics['ari']:.4f} NMI={metrics['nmi']:.4f} ACC={metrics['acc']:.4f}")
    return 0


def cmd_encode(args) -> int:
    cfg = load_config(args.config, args.set, args.seed)
    table, _ = _load_input(args)
    bepm = encode_table(table, cfg.bep)
    dump_bep(bepm, args.out)
    print(f"{bepm.n} rows x {bepm.p} bits -> {args.out}")
    return 0


def cmd_sense(args) -> int:
    cfg = load_config(args.config, args.set, args.seed)
    table, _ = _load_input(args)
    views = make_views(table, cfg, ablation=args.ablation, workers=_workers(args))
    write_views(args.out, views, [c.name for c in table.schema])
    print(f"{len(views)} weight vectors -> {args.out}")
    return 0


def cmd_cluster(args) -> int:
    cfg = load_config(args.config, args.set, args.seed)
    table, _ = _load_input(args)
    names = [c.name for c in table.schema]
    bepm = encode_table(table, cfg.bep)
    if args.weights is not None:
        views = read_views(args.weights, names)
    else:
        views = make_views(table, cfg, ablation=args.ablation or "uniform")
    L, _centers = stage_one(
        bepm, views, cfg.k0, cfg.alpha0, cfg.beta0, cfg.seed, cfg.max_iter, _workers(args)
    )
    y = stage_two(one_hot_records(L, cfg.k0), cfg.K, cfg.alpha, cfg.beta0, cfg.seed, cfg.max_iter)
    os.makedirs(args.out, exist_ok=True)
    write_records(os.path.join(args.out, "records.csv"), L, cfg.k0)
    write_labels(os.path.join(args.out, "labels.csv"), y)
    print(f"stage I: {L.shape[1]} rounds; stage II: K={cfg.K} sizes={np.bincount(y).tolist()}")
    return 0


def cmd_explain(args) -> int:
    cfg = load_config(args.config, args.set, args.seed)
    table, _ = _load_input(args)
    names = [c.name for c in table.schema]
    L, k0 = read_records(args.records)
    y = read_labels(args.labels)
    views = read_views(args.weights, names)
    ex = compute_explanations(L, y, views_matrix(views), int(y.max()) + 1, k0, cfg.eps)
    sizes = np.bincount(y)
    ranking, weights = global_ranking(ex.W_cluster, sizes)
    report = {
        "consistency_deviation": ex.consistency_deviation,
        "global_ranking": [names[j] for j in ranking],
        "global_weights": [float(w) for w in weights],
        "cluster_weights": ex.W_cluster.tolist(),
        "undiscriminated": ex.undiscriminated,
    }
    if args.instances:
        report["instance_weights"] = ex.W_instance.tolist()
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(report, fh, ensure_ascii=False, indent=2)
        fh.write("\n")
    print(f"consistency deviation {ex.consistency_deviation:.2e} -> {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config, args.set, args.seed)
    table, truth = _load_input(args)
    y = read_labels(args.labels)
    if y.size != table.n:
        raise DataError(f"{y.size} labels for {table.n} rows")
    metrics = evaluate(table, y, truth, seed=cfg.seed)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(metrics, fh, ensure_ascii=False, indent=2)
        fh.write("\n")
    print(json.dumps(metrics, ensure_ascii=False))
    return 0


def cmd_synth(args) -> int:
    params = SynthParams(
        n=args.n, clusters=args.clusters,
        informative_numeric=args.informative_numeric,
        informative_nominal=args.informative_nominal,
        noise_numeric=args.noise_numeric, noise_nominal=args.noise_nominal,
        noise=args.noise, seed=args.seed if args.seed is not None else 7,
    )
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "data.csv")
    schema_path = os.path.join(args.out, "schema.json")
    write_synth(params, csv_path, schema_path)
    print(f"{params.n} rows, {params.clusters} planted clusters -> {csv_path}")
    return 0


def _add_io(sub, data=True, config=True):
    if data:
        sub.add_argument("--data", required=True, help="input CSV")
        sub.add_argument("--schema", required=True, help="schema JSON")
        sub.add_argument("--truth-column", default=None,
                         help="name of a ground-truth column to set aside")
    if config:
        sub.add_argument("--config", help="JSON config file")
        sub.add_argument("--set", action="append", metavar="KEY=VALUE",
                         help="override one config key (repeatable)")
        sub.add_argument("--seed", type=int, default=None,
                         help=f"master seed (default {DEFAULT_SEED})")
        sub.add_argument("--workers", type=int, default=None,
                         help=f"worker processes (default ${WORKERS_ENV} or all cores)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wise", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="full pipeline: labels, weights, explanations, metrics")
    _add_io(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--ablation", choices=ABLATIONS, default="none")
    p.add_argument("--top-q", type=int, default=3, help="features listed per cluster")
    p.add_argument("--instances", action="store_true", help="include per-instance weights")
    p.add_argument("--dump-records", action="store_true", help="include the record matrix")
    p.add_argument("--faithfulness", action="store_true", help="run the probe-tree harness")
    p.add_argument("--trials", type=int, default=10, help="random subsets in the probe harness")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("encode", help="dump the sparse binary encoding")
    _add_io(p)
    p.add_argument("--out", required=True, help="output file")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("sense", help="dump the feature-weight views")
    _add_io(p)
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--ablation", choices=ABLATIONS, default="none")
    p.set_defaults(func=cmd_sense)

    p = sub.add_parser("cluster", help="run both clustering stages from saved or ablation weights")
    _add_io(p)
    p.add_argument("--weights", default=None, help="weights CSV from sense (default: uniform)")
    p.add_argument("--ablation", choices=ABLATIONS, default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("explain", help="explanations from saved records, labels, and weights")
    _add_io(p)
    p.add_argument("--records", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--instances", action="store_true")
    p.add_argument("--out", required=True, help="output JSON")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("evaluate", help="metrics for saved labels")
    _add_io(p)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True, help="output JSON")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="generate a planted mixed-type dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n", type=int, default=3000)
    p.add_argument("--clusters", type=int, default=3)
    p.add_argument("--informative-numeric", type=int, default=2)
    p.add_argument("--informative-nominal", type=int, default=2)
    p.add_argument("--noise-numeric", type=int, default=3)
    p.add_argument("--noise-nominal", type=int, default=1)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except InvariantError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 4
    except Exception as exc:  # noqa: BLE001 - boundary: map anything else to 4
        log.exception("unexpected failure")
        print(f"internal error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
