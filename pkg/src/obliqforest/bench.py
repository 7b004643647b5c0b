"""Monte-Carlo cross-validation and variable-importance benchmarks."""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import forest as F
from .importance import anova_vi, negation_vi, permutation_vi, vi_discrimination
from .metrics import evaluate
from .obliquetree import GrowParams
from .simgen import SimConfig, simulate
from .survdata import SurvivalDataset

DEFAULT_VI_GRID = tuple(
    SimConfig(n=n, max_corr=r) for n in (500, 1000, 2500) for r in (0.3, 0.15, 0.0)
)
VI_CLASSES = ("main", "nonlinear", "combination_source", "interaction")

BENCH_FIELDS = ("task", "learner", "run", "ipa", "td_c", "harrell_c", "fit_ms",
                "predict_ms", "seed", "failed", "excluded")
VI_FIELDS = ("n", "max_corr", "technique", "variable_class", "discrimination", "run", "vi_ms")


@dataclass
class BenchResult:
    rows: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def column(self, name, learner=None, include_excluded=False):
        return np.array([
            r[name] for r in self.rows
            if (learner is None or r["learner"] == learner)
            and (include_excluded or not r["excluded"])
        ])

    def to_csv(self, path):
        _write_csv(path, BENCH_FIELDS, self.rows, self.config)


@dataclass
class VIBenchResult:
    rows: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def select(self, **where):
        return [r for r in self.rows if all(r[k] == v for k, v in where.items())]

    def to_csv(self, path):
        _write_csv(path, VI_FIELDS, self.rows, self.config)


def _write_csv(path, fields, rows, config):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("# config: " + json.dumps(config, sort_keys=True, default=str) + "\n")
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def stratified_half(status, rng: np.random.Generator):
    """Random 50/50 split with events and censorings divided evenly."""
    status = np.asarray(status)
    train = []
    for s in (0, 1):
        idx = np.flatnonzero(status == s)
        idx = idx[rng.permutation(idx.size)]
        train.append(idx[: int(np.ceil(idx.size / 2))])
    train = np.sort(np.concatenate(train))
    test = np.setdiff1d(np.arange(status.size), train)
    return train, test


def learner_params(strategy: str, base: F.ForestParams | None = None) -> F.ForestParams:
    base = base or F.ForestParams()
    return replace(base, grow=replace(base.grow, combo_strategy=strategy))


def monte_carlo_cv(ds: SurvivalDataset, learners=("fast", "cph", "random"), n_runs: int = 25,
                   seed: int = 0, base_params: F.ForestParams | None = None,
                   task: str = "task", n_threads: int | None = None) -> BenchResult:
    """Repeated random 50/50 train/test splits; one row per (run, learner).

    ``learners`` is a sequence of combo strategies or a mapping of learner id
    to :class:`ForestParams`. A learner failure flags every row of its run as
    excluded rather than aborting the benchmark.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    if not isinstance(learners, dict):
        learners = {s: learner_params(s, base_params) for s in learners}
    result = BenchResult(config={
        "task": task, "n_runs": n_runs, "seed": seed,
        "learners": {k: asdict(v) for k, v in learners.items()},
    })
    for run in range(1, n_runs + 1):
        rng = np.random.default_rng([seed, run])
        train_idx, test_idx = stratified_half(ds.status, rng)
        train, test = ds.subset(train_idx), ds.subset(test_idx)
        run_rows = []
        for li, (name, params) in enumerate(learners.items()):
            fit_seed = int(np.random.SeedSequence([seed, run, li]).generate_state(1, np.uint64)[0])
            row = dict(task=task, learner=name, run=run, seed=fit_seed, ipa=np.nan,
                       td_c=np.nan, harrell_c=np.nan, fit_ms=np.nan, predict_ms=np.nan,
                       failed=False, excluded=False)
            try:
                t0 = time.perf_counter()
                forest = F.fit(train, replace(params, seed=fit_seed), n_threads=n_threads)
                t1 = time.perf_counter()
                leaves = forest.leaves(test.X)
                risk = forest.mortality_from_leaves(leaves)
                t2 = time.perf_counter()
                ev = evaluate(lambda g: forest.survival_from_leaves(leaves, g)[0], risk,
                              test.time, test.status, train.time, train.status)
                row.update(ipa=ev.ipa, td_c=ev.td_c, harrell_c=ev.harrell_c,
                           fit_ms=1e3 * (t1 - t0), predict_ms=1e3 * (t2 - t1))
            except Exception as e:  # learner failures are data
                row.update(failed=True, error=f"{type(e).__name__}: {e}")
            run_rows.append(row)
        if any(r["failed"] for r in run_rows):
            for r in run_rows:
                r["excluded"] = True
        result.rows.extend(run_rows)
    return result


TECHNIQUES = {
    "negation": lambda f, ds, seed: negation_vi(f, ds),
    "permutation": lambda f, ds, seed: permutation_vi(f, ds, seed),
    "anova": lambda f, ds, seed: anova_vi(f),
}


def class_discrimination(values, relevance, class_labels) -> dict:
    """Overall and per-class (class vs irrelevant) discrimination."""
    values = np.asarray(values, dtype=np.float64)
    labels = np.asarray(class_labels)
    irr = labels == "irrelevant"
    out = {"overall": vi_discrimination(values, relevance)}
    for cls in VI_CLASSES:
        m = labels == cls
        if m.any() and irr.any():
            sel = m | irr
            out[cls] = vi_discrimination(values[sel], m[sel])
    return out


def vi_benchmark(grid=DEFAULT_VI_GRID, techniques=("negation", "permutation", "anova"),
                 n_reps: int = 1, seed: int = 0, forest_params: F.ForestParams | None = None,
                 n_threads: int | None = None) -> VIBenchResult:
    """Simulate, fit a fast-strategy forest, and score each VI technique."""
    grid = list(grid)
    if not grid:
        raise ValueError("grid is empty")
    params = forest_params or F.ForestParams(grow=GrowParams(combo_strategy="fast"))
    for t in techniques:
        if t not in TECHNIQUES and not callable(t):
            raise ValueError(f"unknown VI technique {t!r}")
    result = VIBenchResult(config={
        "grid": [asdict(c) for c in grid], "techniques": [str(t) for t in techniques],
        "n_reps": n_reps, "seed": seed, "forest": asdict(params),
    })
    for ci, cell in enumerate(grid):
        for rep in range(1, n_reps + 1):
            ss = np.random.SeedSequence([seed, ci, rep])
            sim_seed, fit_seed, vi_seed = (int(s) for s in ss.generate_state(3, np.uint64))
            sim = simulate(replace(cell, seed=sim_seed))
            forest = F.fit(sim.ds, replace(params, seed=fit_seed), n_threads=n_threads)
            for tech in techniques:
                fn = TECHNIQUES[tech] if not callable(tech) else tech
                name = tech if isinstance(tech, str) else getattr(tech, "__name__", "custom")
                t0 = time.perf_counter()
                report = fn(forest, sim.ds, vi_seed)
                vi_ms = 1e3 * (time.perf_counter() - t0)
                values = getattr(report, "values", report)
                for cls, c in class_discrimination(values, sim.relevance, sim.class_labels).items():
                    result.rows.append(dict(n=cell.n, max_corr=cell.max_corr, technique=name,
                                            variable_class=cls, discrimination=c, run=rep,
                                            vi_ms=vi_ms))
    return result
