"""Command-line entry point: ``obliqforest {fit,predict,importance,evaluate,simulate,bench}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import bench as B
from . import forest as F
from .importance import anova_vi, negation_vi, permutation_vi
from .metrics import evaluate
from .obliquetree import COMBO_STRATEGIES, GrowParams
from .simgen import SimConfig, simulate, write_sim
from .survdata import DataError, load_csv

log = logging.getLogger("obliqforest")

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2
BOOTSTRAP_FLAG = {"multinomial": "multinomial", "uniform010": "uniform_0_10"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage problems; here those are validation failures
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


@dataclass
class CliConfig:
    subcommand: str
    paths: dict = field(default_factory=dict)
    forest: F.ForestParams | None = None
    sim: SimConfig | None = None
    seed: int = 0
    threads: int = 1
    verbosity: int = 0


def _env_threads():
    env = os.environ.get("OBLIQFOREST_THREADS")
    if env is None:
        return None
    try:
        return int(env)
    except ValueError:
        raise ValueError(f"OBLIQFOREST_THREADS must be an integer, got {env!r}") from None


def _floats(text: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: $OBLIQFOREST_THREADS or min(4, cpus))")
    p.add_argument("-v", "--verbose", action="count", default=0)


def _add_data(p, required=True):
    p.add_argument("--data", required=required)
    p.add_argument("--time", required=required, default="time")
    p.add_argument("--status", required=required, default="status")


def _add_forest(p):
    g = p.add_argument_group("forest")
    g.add_argument("--strategy", choices=sorted(COMBO_STRATEGIES), default="fast")
    g.add_argument("--n-tree", type=int, default=500)
    g.add_argument("--mtry", type=int, default=None)
    g.add_argument("--n-split", type=int, default=5)
    g.add_argument("--n-retry", type=int, default=3)
    g.add_argument("--split-min-stat", type=float, default=3.841459)
    g.add_argument("--bootstrap", choices=sorted(BOOTSTRAP_FLAG), default="multinomial")


def _add_sim(p):
    g = p.add_argument_group("simulation")
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--max-corr", type=float, default=0.0)
    g.add_argument("--n-per-class", type=int, default=15)
    g.add_argument("--hazard-ratio", type=float, default=1.64)
    g.add_argument("--censoring", type=float, default=0.45)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="obliqforest", description="Accelerated oblique random survival forests.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="train a forest and write a model file")
    _add_data(p)
    p.add_argument("--out", required=True)
    _add_forest(p)
    _add_common(p)

    p = sub.add_parser("predict", help="mortality and survival probabilities for new rows")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--time", default="time", help="outcome column ignored if present")
    p.add_argument("--status", default="status", help="outcome column ignored if present")
    p.add_argument("--times", type=_floats, default=None,
                   help="comma-separated horizons (default: training event-time quartiles)")
    p.add_argument("--out", required=True)
    _add_common(p)

    p = sub.add_parser("importance", help="variable importance of a trained model")
    p.add_argument("--model", required=True)
    _add_data(p, required=False)
    p.add_argument("--technique", choices=("negation", "permutation", "anova"), default="negation")
    p.add_argument("--out", required=True)
    _add_common(p)

    p = sub.add_parser("evaluate", help="C-statistics, integrated Brier score and IPA on test data")
    p.add_argument("--model", required=True)
    _add_data(p)
    p.add_argument("--train", default=None,
                   help="training CSV for the Kaplan-Meier reference (default: --data)")
    p.add_argument("--out", required=True)
    _add_common(p)

    p = sub.add_parser("simulate", help="write simulated data plus a relevance sidecar")
    _add_sim(p)
    p.add_argument("--out", required=True)
    p.add_argument("--relevance", default=None, help="sidecar path (default: <out stem>_relevance.csv)")
    _add_common(p)

    p = sub.add_parser("bench", help="benchmarks")
    bsub = p.add_subparsers(dest="bench_kind", required=True, parser_class=_Parser)
    q = bsub.add_parser("vi", help="variable-importance discrimination grid")
    q.add_argument("--grid", choices=("default",), default="default")
    q.add_argument("--n", type=_ints, default=None, help="override grid sizes, e.g. 500,1000")
    q.add_argument("--max-corr", type=_floats, default=None, help="override grid correlations")
    q.add_argument("--n-per-class", type=int, default=15)
    q.add_argument("--hazard-ratio", type=float, default=1.64)
    q.add_argument("--censoring", type=float, default=0.45)
    q.add_argument("--technique", action="append", choices=("negation", "permutation", "anova"))
    q.add_argument("--n-reps", type=int, default=1)
    q.add_argument("--out", required=True)
    _add_forest(q)
    _add_common(q)
    q = bsub.add_parser("cv", help="Monte-Carlo cross-validation of combo strategies")
    _add_data(q)
    q.add_argument("--n-runs", type=int, default=25)
    q.add_argument("--learner", action="append", choices=sorted(COMBO_STRATEGIES))
    q.add_argument("--out", required=True)
    _add_forest(q)
    _add_common(q)
    return ap


def _forest_params(args) -> F.ForestParams:
    if args.mtry is not None and args.mtry < 1:
        raise ValueError("mtry must be ≥ 1")
    grow = GrowParams(mtry=args.mtry, n_split=args.n_split, n_retry=args.n_retry,
                      split_min_stat=args.split_min_stat, combo_strategy=args.strategy)
    params = F.ForestParams(n_tree=args.n_tree, grow=grow, seed=args.seed,
                            bootstrap_mode=BOOTSTRAP_FLAG[args.bootstrap])
    # p is unknown until data is read; validate everything p-independent now
    replace(grow, mtry=grow.mtry or 1).validate()
    if params.n_tree < 1:
        raise ValueError("n_tree must be >= 1")
    return params


def _sim_config(args) -> SimConfig:
    return SimConfig(n=args.n, n_per_class=args.n_per_class, max_corr=args.max_corr,
                     hazard_ratio_per_sd=args.hazard_ratio, target_censoring=args.censoring,
                     seed=args.seed).validate()


def build_config(args) -> CliConfig:
    threads = args.threads if args.threads is not None else _env_threads()
    threads = threads if threads is not None else F.default_threads()
    if threads < 1:
        raise ValueError("threads must be >= 1")
    paths = {k: getattr(args, k) for k in ("data", "model", "out", "train", "relevance")
             if getattr(args, k, None) is not None}
    cfg = CliConfig(args.command, paths, seed=args.seed, threads=threads, verbosity=args.verbose)
    if args.seed < 0:
        raise ValueError("seed must be >= 0")
    if hasattr(args, "strategy"):
        cfg.forest = _forest_params(args)
    if args.command == "simulate":
        cfg.sim = _sim_config(args)
    return cfg


def _echo(cfg: CliConfig, **extra) -> str:
    doc = {"command": cfg.subcommand, "seed": cfg.seed, **extra}
    if cfg.forest is not None:
        doc["forest"] = asdict(cfg.forest)
    if cfg.sim is not None:
        doc["sim"] = asdict(cfg.sim)
    return "config: " + json.dumps(doc, sort_keys=True, default=str)


def _write_table(path, header, rows, comment):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _read_features(path, col_names, drop=()):
    """Predictor matrix from a CSV whose predictor columns must match the model's."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(line for line in fh if not line.startswith("#")))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    present = [h for h in header if h not in drop]
    missing = [c for c in col_names if c not in present]
    extra = [c for c in present if c not in col_names]
    if missing or extra:
        parts = []
        if missing:
            parts.append("missing columns: " + ", ".join(missing))
        if extra:
            parts.append("unknown columns: " + ", ".join(extra))
        raise DataError("column mismatch; " + "; ".join(parts))
    idx = [header.index(c) for c in col_names]
    X = np.empty((len(rows) - 1, len(col_names)))
    for i, r in enumerate(rows[1:]):
        if len(r) != len(header):
            raise DataError(f"line {i + 2}: expected {len(header)} fields, got {len(r)}")
        for k, j in enumerate(idx):
            try:
                X[i, k] = float(r[j])
            except ValueError:
                raise DataError(f"non-numeric cell {r[j]!r} at line {i + 2}, column '{header[j]}'") from None
    return X


def _load_model(path):
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    return F.load(path)


def cmd_fit(args, cfg: CliConfig) -> int:
    ds = load_csv(args.data, args.time, args.status)
    t0 = time.perf_counter()
    forest = F.fit(ds, cfg.forest, n_threads=cfg.threads)
    elapsed = time.perf_counter() - t0
    F.save(forest, args.out)
    print(f"fit: n={ds.n} p={ds.p} events={ds.n_events} n_tree={forest.n_tree} "
          f"elapsed={elapsed:.2f}s -> {args.out}")
    return EXIT_OK


def cmd_predict(args, cfg: CliConfig) -> int:
    forest = _load_model(args.model)
    X = _read_features(args.data, forest.col_names, drop=(args.time, args.status))
    times = args.times
    if times is None:
        times = np.percentile(forest.train_event_times, [25, 50, 75]).tolist()
    h = np.sort(np.asarray(times, dtype=np.float64))
    leaves = forest.leaves(X)
    surv, _ = forest.survival_from_leaves(leaves, h)
    mort = forest.mortality_from_leaves(leaves)
    header = ["row", "mortality"] + [f"surv_{float(t)!r}" for t in h]
    rows = [[i, mort[i], *surv[i]] for i in range(X.shape[0])]
    _write_table(args.out, header, rows, _echo(cfg, model=args.model, times=h.tolist()))
    print(f"predict: {X.shape[0]} rows x {h.size} times -> {args.out}")
    return EXIT_OK


def cmd_importance(args, cfg: CliConfig) -> int:
    forest = _load_model(args.model)
    if args.technique == "anova":
        report = anova_vi(forest)
    else:
        if args.data is None:
            raise ValueError(f"--data (the training CSV) is required for {args.technique} importance")
        ds = load_csv(args.data, args.time, args.status)
        if tuple(ds.col_names) != tuple(forest.col_names):
            raise DataError("training data columns do not match the model")
        if args.technique == "negation":
            report = negation_vi(forest, ds)
        else:
            report = permutation_vi(forest, ds, rng=cfg.seed)
    rows = list(zip(report.col_names, report.values))
    _write_table(args.out, ["name", "vi"], rows,
                 _echo(cfg, model=args.model, technique=args.technique))
    print(f"importance ({args.technique}): {len(rows)} predictors -> {args.out}")
    return EXIT_OK


def cmd_evaluate(args, cfg: CliConfig) -> int:
    forest = _load_model(args.model)
    test = load_csv(args.data, args.time, args.status)
    train = load_csv(args.train, args.time, args.status) if args.train else test
    for ds in (test, train):
        if tuple(ds.col_names) != tuple(forest.col_names):
            raise DataError("data columns do not match the model")
    leaves = forest.leaves(test.X)
    risk = forest.mortality_from_leaves(leaves)
    ev = evaluate(lambda g: forest.survival_from_leaves(leaves, g)[0], risk,
                  test.time, test.status, train.time, train.status)
    rows = [("harrell_c", ev.harrell_c), ("td_c", ev.td_c), ("td_c_time", ev.td_c_time),
            ("ibs", ev.ibs), ("ibs_reference", ev.ibs_reference), ("ipa", ev.ipa),
            ("t1", ev.t1), ("t2", ev.t2)]
    _write_table(args.out, ["metric", "value"], rows,
                 _echo(cfg, model=args.model, data=args.data, train=args.train or args.data))
    print("evaluate: " + " ".join(f"{k}={v:.4f}" for k, v in rows[:6]))
    return EXIT_OK


def cmd_simulate(args, cfg: CliConfig) -> int:
    sim = simulate(cfg.sim)
    rel = args.relevance or str(Path(args.out).with_name(Path(args.out).stem + "_relevance.csv"))
    write_sim(sim, args.out, rel, comment=_echo(cfg))
    print(f"simulate: n={sim.ds.n} p={sim.ds.p} events={sim.ds.n_events} -> {args.out}, {rel}")
    return EXIT_OK


def cmd_bench(args, cfg: CliConfig) -> int:
    if args.bench_kind == "vi":
        sizes = args.n or [500, 1000, 2500]
        corrs = args.max_corr or [0.3, 0.15, 0.0]
        grid = [SimConfig(n=n, max_corr=r, n_per_class=args.n_per_class,
                          hazard_ratio_per_sd=args.hazard_ratio,
                          target_censoring=args.censoring).validate()
                for n in sizes for r in corrs]
        if args.n_reps < 1:
            raise ValueError("n_reps must be >= 1")
        techniques = tuple(args.technique or ("negation", "permutation", "anova"))
        res = B.vi_benchmark(grid, techniques, args.n_reps, cfg.seed, cfg.forest,
                             n_threads=cfg.threads)
    else:
        ds = load_csv(args.data, args.time, args.status)
        learners = tuple(args.learner or ("fast", "cph", "random"))
        res = B.monte_carlo_cv(ds, learners, args.n_runs, cfg.seed, cfg.forest,
                               task=Path(args.data).stem, n_threads=cfg.threads)
    res.to_csv(args.out)
    print(f"bench {args.bench_kind}: {len(res.rows)} rows -> {args.out}")
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "predict": cmd_predict, "importance": cmd_importance,
            "evaluate": cmd_evaluate, "simulate": cmd_simulate, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"obliqforest: error: {e}", file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = build_config(args)
        log.info("%s", _echo(cfg))
        return COMMANDS[args.command](args, cfg)
    except OSError as e:
        print(f"obliqforest: I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, UsageError) as e:  # DataError, ModelFormatError, IPCWError included
        print(f"obliqforest: error: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
