"""Variable importance for oblique survival forests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forest import Forest
from .metrics import harrell_c
from .survdata import SurvivalDataset

ANOVA_THRESHOLD = 0.01


@dataclass(frozen=True)
class VIReport:
    technique: str
    values: np.ndarray
    col_names: tuple
    baseline_metric: float | None = None
    seed: int | None = None
    counts: np.ndarray | None = None  # anova: (significant, occurrences)

    def as_dict(self) -> dict:
        return dict(zip(self.col_names, (float(v) for v in self.values)))

    def ranking(self) -> list:
        order = np.argsort(-self.values, kind="mergesort")
        return [self.col_names[i] for i in order]


def _oob_score(forest, ds, metric, X=None, coefs=None):
    leaves = forest.leaves(ds.X if X is None else X, coefs=coefs, oob=True)
    risk = forest.mortality_from_leaves(leaves)
    keep = ~np.isnan(risk)
    return metric(ds.time[keep], ds.status[keep], risk[keep])


def _check(forest: Forest, ds: SurvivalDataset):
    if ds.p != forest.p or ds.n != forest.inbag_weights.shape[1]:
        raise ValueError("dataset does not match the forest's training data")
    if not np.any(forest.inbag_weights == 0):
        raise ValueError("no out-of-bag rows available")


def negation_vi(forest: Forest, ds: SurvivalDataset, metric=harrell_c) -> VIReport:
    """Drop in out-of-bag ``metric`` after flipping the sign of every
    coefficient attached to each predictor. The forest itself is not modified."""
    _check(forest, ds)
    baseline = _oob_score(forest, ds, metric)
    pk = forest.packed
    values = np.zeros(forest.p)
    for j in range(forest.p):
        hit = pk.ccols == j
        if not np.any(pk.ccoefs[hit] != 0):
            continue
        overlay = pk.ccoefs.copy()
        overlay[hit] *= -1.0
        values[j] = baseline - _oob_score(forest, ds, metric, coefs=overlay)
    return VIReport("negation", values, forest.col_names, baseline)


def permutation_vi(forest: Forest, ds: SurvivalDataset, rng: np.random.Generator | int = 0,
                   n_repeats: int = 1, metric=harrell_c) -> VIReport:
    """Drop in out-of-bag ``metric`` after permuting each predictor's column."""
    _check(forest, ds)
    seed = rng if isinstance(rng, (int, np.integer)) else None
    rng = np.random.default_rng(rng) if seed is not None else rng
    baseline = _oob_score(forest, ds, metric)
    X = ds.X.copy()
    values = np.zeros(forest.p)
    for j in range(forest.p):
        original = X[:, j].copy()
        scores = []
        for _ in range(n_repeats):
            X[:, j] = original[rng.permutation(ds.n)]
            scores.append(_oob_score(forest, ds, metric, X=X))
        X[:, j] = original
        values[j] = baseline - float(np.mean(scores))
    return VIReport("permutation", values, forest.col_names, baseline, seed=seed)


def anova_vi(forest: Forest, threshold: float = ANOVA_THRESHOLD,
             normalize: bool = True) -> VIReport:
    """Share (or raw count) of a predictor's node coefficients with p <= threshold."""
    pk = forest.packed
    if pk.ccols.size and np.all(np.isnan(pk.cpvals)):
        raise ValueError("forest has no stored p-values (grown with the random strategy)")
    sig = np.bincount(pk.ccols[pk.cpvals <= threshold], minlength=forest.p)
    occ = np.bincount(pk.ccols, minlength=forest.p)
    if normalize:
        values = np.divide(sig, occ, out=np.zeros(forest.p), where=occ > 0)
    else:
        values = sig.astype(np.float64)
    return VIReport("anova", values, forest.col_names, counts=np.stack([sig, occ]))


def vi_discrimination(vi_values, relevance) -> float:
    """Probability a relevant predictor outranks an irrelevant one (ties count half)."""
    vi = np.asarray(vi_values, dtype=np.float64)
    rel = np.asarray(relevance).astype(bool)
    if rel.all() or not rel.any():
        raise ValueError("need both relevant and irrelevant predictors")
    pos, neg = vi[rel], np.sort(vi[~rel])
    lo = np.searchsorted(neg, pos, side="left")
    hi = np.searchsorted(neg, pos, side="right")
    return float((lo.sum() + 0.5 * (hi - lo).sum()) / (pos.size * neg.size))
