"""Log-rank cutpoint evaluation and selection on a linear predictor."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .survdata import time_order


@dataclass(frozen=True)
class LinearCombo:
    cols: tuple
    coefs: np.ndarray

    def __post_init__(self):
        cols = tuple(int(c) for c in self.cols)
        coefs = np.asarray(self.coefs, dtype=np.float64)
        if len(set(cols)) != len(cols):
            raise ValueError("combo columns must be unique")
        if coefs.shape != (len(cols),):
            raise ValueError("cols and coefs differ in length")
        if not np.any(coefs != 0):
            raise ValueError("combo needs at least one nonzero coefficient")
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "coefs", coefs)

    def eta(self, X):
        return np.asarray(X, dtype=np.float64)[:, list(self.cols)] @ self.coefs


@dataclass(frozen=True)
class SplitCandidate:
    cutpoint: float
    stat: float


def _sorted(eta, time, status, weights):
    eta = np.asarray(eta, dtype=np.float64)
    time = np.asarray(time, dtype=np.float64)
    status = np.asarray(status, dtype=np.float64)
    weights = np.ones_like(time) if weights is None else np.asarray(weights, dtype=np.float64)
    o = time_order(time, status)
    return eta[o], time[o], status[o], weights[o]


def logrank_stat(eta, time, status, weights, cutpoint: float) -> float:
    """Squared standardized two-sample log-rank statistic (chi-square, 1 df).

    Left group is ``eta <= cutpoint``. Weights act as replication counts.
    """
    e, t, s, w = _sorted(eta, time, status, weights)
    left = e <= cutpoint
    if w[left].sum() < 1 or w[~left].sum() < 1:
        raise ValueError("degenerate cutpoint: one group is empty")
    return float(K.logrank_stat(e, t, s, w, float(cutpoint)))


def sample_cutpoints(eta, weights, status, n_split: int, min_obs: float, min_events: float,
                     rng: np.random.Generator) -> np.ndarray:
    """Up to ``n_split`` distinct unique-eta values valid on both sides."""
    if n_split < 1:
        raise ValueError("n_split must be >= 1")
    eta = np.asarray(eta, dtype=np.float64)
    w = np.ones_like(eta) if weights is None else np.asarray(weights, dtype=np.float64)
    valid = K.valid_cutpoints(eta, np.asarray(status, dtype=np.float64), w,
                              float(min_obs), float(min_events))
    return K.sample_without_replacement(rng, valid, int(n_split))


def best_cutpoint(eta, time, status, weights, candidates) -> SplitCandidate:
    """Candidate with the largest log-rank statistic; ties go to the smallest cutpoint."""
    cands = np.asarray(candidates, dtype=np.float64)
    if cands.size == 0:
        raise ValueError("no candidate cutpoints")
    e, t, s, w = _sorted(eta, time, status, weights)
    c, st = K.best_of(e, t, s, w, cands)
    return SplitCandidate(float(c), float(st))


def pick_best(candidates, stats) -> SplitCandidate:
    """Argmax over precomputed statistics with the smallest-cutpoint tie rule."""
    cands = np.asarray(candidates, dtype=np.float64)
    stats = np.asarray(stats, dtype=np.float64)
    if cands.size == 0:
        raise ValueError("no candidate cutpoints")
    top = stats.max()
    return SplitCandidate(float(cands[stats == top].min()), float(top))
