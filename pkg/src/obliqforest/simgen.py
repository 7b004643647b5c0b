"""Simulated right-censored data with five predictor classes.

Observed predictors come in equal-sized blocks: irrelevant, main effect,
non-linear effect, combination source and interaction. The outcome is driven
by hidden effect columns (non-linear maps, combinations and products) that
never appear in the returned predictor matrix.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .survdata import SurvivalDataset, write_csv

CLASSES = ("irrelevant", "main", "nonlinear", "combination_source", "interaction")
PREFIX = {"irrelevant": "irr", "main": "main", "nonlinear": "nlin",
          "combination_source": "comb", "interaction": "intr"}
WEIBULL_SHAPE = 1.5


@dataclass(frozen=True)
class SimConfig:
    n: int = 1000
    n_per_class: int = 15
    max_corr: float = 0.0
    hazard_ratio_per_sd: float = 1.64
    target_censoring: float = 0.45
    seed: int = 0

    def validate(self) -> "SimConfig":
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.n_per_class < 1:
            raise ValueError("n_per_class must be >= 1")
        if not 0 <= self.max_corr < 1:
            raise ValueError("max_corr must lie in [0, 1)")
        if not self.hazard_ratio_per_sd > 0:
            raise ValueError("hazard_ratio_per_sd must be > 0")
        if not 0.01 <= self.target_censoring < 1:
            raise ValueError("target_censoring must lie in [0.01, 1)")
        return self


@dataclass(frozen=True)
class SimData:
    ds: SurvivalDataset
    relevance: np.ndarray
    class_labels: tuple
    partners: dict = field(default_factory=dict)  # interaction column -> partner effect
    effect_labels: tuple = ()
    effect_coefs: np.ndarray = None

    def class_mask(self, cls: str) -> np.ndarray:
        return np.array([c == cls for c in self.class_labels])


def gen_correlation_matrix(p: int, max_corr: float, rng: np.random.Generator) -> np.ndarray:
    """Random correlations in [-max_corr, max_corr], projected to the PSD cone."""
    if not 0 <= max_corr < 1:
        raise ValueError("max_corr must lie in [0, 1)")
    if max_corr == 0:
        return np.eye(p)
    A = rng.uniform(-max_corr, max_corr, size=(p, p))
    A = np.triu(A, 1)
    A = A + A.T + np.eye(p)
    vals, vecs = np.linalg.eigh(A)
    if vals.min() < 1e-8:
        A = (vecs * np.maximum(vals, 1e-8)) @ vecs.T
        d = np.sqrt(np.diag(A))
        A = A / np.outer(d, d)
        A = 0.5 * (A + A.T)
        np.fill_diagonal(A, 1.0)
    return A


def gen_predictors(n: int, corr: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Zero-mean, unit-variance multivariate normal rows via a symmetric root."""
    vals, vecs = np.linalg.eigh(corr)
    if vals.min() < -1e-8:
        raise np.linalg.LinAlgError("correlation matrix is not positive semi-definite")
    root = (vecs * np.sqrt(np.clip(vals, 0, None))) @ vecs.T
    return rng.standard_normal((n, corr.shape[0])) @ root


def _std(v):
    sd = v.std()
    return (v - v.mean()) / sd if sd > 0 else v - v.mean()


def nonlinear_map(x):
    """Centered square: zero mean for standard normal input, non-monotone."""
    return x**2 - 1.0


def build_effect_matrix(X_raw, config: SimConfig, rng: np.random.Generator | None = None):
    """Hidden effect matrix for outcome generation.

    Returns ``(effects, effect_labels, class_labels, relevance, effect_coefs,
    partners)``; ``class_labels``/``relevance`` describe the observed columns
    of ``X_raw``. ``rng`` is accepted for interface symmetry; assignments are
    deterministic.
    """
    X_raw = np.asarray(X_raw, dtype=np.float64)
    k = config.n_per_class
    if X_raw.shape[1] < 5 * k:
        raise ValueError(f"need at least {5 * k} base columns, got {X_raw.shape[1]}")
    blocks = {c: X_raw[:, i * k:(i + 1) * k] for i, c in enumerate(CLASSES)}
    class_labels = tuple(c for c in CLASSES for _ in range(k))
    relevance = np.array([c != "irrelevant" for c in class_labels], dtype=np.int8)
    beta = float(np.log(config.hazard_ratio_per_sd))

    cols, labels, coefs = [], [], []

    def add(v, label, coef):
        cols.append(v)
        labels.append(label)
        coefs.append(coef)

    for i in range(k):
        add(blocks["irrelevant"][:, i], f"irr_{i + 1}", 0.0)
    main = [blocks["main"][:, i] for i in range(k)]
    for i, v in enumerate(main):
        add(v, f"main_{i + 1}", beta)
    nonlin = [_std(nonlinear_map(blocks["nonlinear"][:, i])) for i in range(k)]
    for i, v in enumerate(nonlin):
        add(v, f"g(nlin_{i + 1})", beta)
    src = blocks["combination_source"]
    for i in range(k):
        add(src[:, i], f"comb_{i + 1}", 0.0)
    combos = []
    for g, a in enumerate(range(0, k, 3)):
        idx = list(range(a, min(a + 3, k)))
        combos.append(_std(src[:, idx].mean(axis=1)))
        add(combos[-1], "mean(" + ",".join(f"comb_{j + 1}" for j in idx) + ")", beta)

    pools = [("main", main), ("nonlinear", nonlin), ("combination", combos)]
    partner_names = {
        "main": [f"main_{i + 1}" for i in range(k)],
        "nonlinear": [f"g(nlin_{i + 1})" for i in range(k)],
        "combination": [labels[len(labels) - len(combos) + g] for g in range(len(combos))],
    }
    partners = {}
    for i in range(k):
        cls, pool = pools[i % 3]
        j = (i // 3) % len(pool)
        name = f"intr_{i + 1}"
        partners[name] = partner_names[cls][j]
        add(_std(blocks["interaction"][:, i] * pool[j]), f"{name}*{partners[name]}", beta)

    effects = np.column_stack(cols)
    return effects, tuple(labels), class_labels, relevance, np.array(coefs), partners


def gen_survival(effects, coefs, target_censoring: float, rng: np.random.Generator):
    """Weibull proportional-hazards event times with calibrated exponential censoring."""
    if not 0.01 <= target_censoring < 1:
        raise ValueError("target_censoring must lie in [0.01, 1)")
    coefs = np.asarray(coefs, dtype=np.float64)
    if not np.all(np.isfinite(coefs)):
        raise ValueError("coefficients must be finite")
    lp = np.asarray(effects, dtype=np.float64) @ coefs
    n = lp.shape[0]
    u = rng.uniform(size=n)
    # inversion at unit scale, then rescale so the sample median is 1
    t_event = (-np.log(u) / np.exp(lp)) ** (1.0 / WEIBULL_SHAPE)
    t_event = t_event / np.median(t_event)
    e = rng.exponential(size=n)

    def censored_frac(log_rate):
        return np.mean(e / np.exp(log_rate) < t_event)

    lo, hi = -30.0, 30.0
    if not censored_frac(lo) <= target_censoring <= censored_frac(hi):
        raise RuntimeError("censoring rate bisection failed to bracket the target")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f = censored_frac(mid)
        if abs(f - target_censoring) <= 0.01:
            break
        if f < target_censoring:
            lo = mid
        else:
            hi = mid
    c = e / np.exp(mid)
    status = (t_event <= c).astype(np.int8)
    return np.minimum(t_event, c), status


def simulate(config: SimConfig) -> SimData:
    config.validate()
    rng = np.random.default_rng(config.seed)
    p = 5 * config.n_per_class
    corr = gen_correlation_matrix(p, config.max_corr, rng)
    X = gen_predictors(config.n, corr, rng)
    effects, elabels, class_labels, relevance, coefs, partners = build_effect_matrix(X, config, rng)
    time, status = gen_survival(effects, coefs, config.target_censoring, rng)
    names = [f"{PREFIX[c]}_{i % config.n_per_class + 1}" for i, c in enumerate(class_labels)]
    ds = SurvivalDataset(X, time, status, names)
    return SimData(ds, relevance, class_labels, partners, elabels, coefs)


def write_sim(sim: SimData, data_path, relevance_path, comment: str | None = None):
    """Data CSV plus a sidecar of (name, class, relevance, partner)."""
    write_csv(sim.ds, data_path, comment=comment)
    with open(relevance_path, "w", newline="", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["name", "class", "relevance", "partner"])
        for name, cls, rel in zip(sim.ds.col_names, sim.class_labels, sim.relevance):
            w.writerow([name, cls, int(rel), sim.partners.get(name, "")])
