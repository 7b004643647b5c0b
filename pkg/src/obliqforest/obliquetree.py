"""Accelerated oblique survival trees: growth, leaf estimators, prediction."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels as K
from .splitfind import LinearCombo
from .survdata import SurvivalDataset, time_order

COMBO_STRATEGIES = {"fast": K.COMBO_FAST, "cph": K.COMBO_CPH, "random": K.COMBO_RANDOM}

CPH_MAX_ITER = 20
CPH_EPSILON = 1e-9


@dataclass(frozen=True)
class GrowParams:
    mtry: int | None = None  # None: round(sqrt(p)) at fit time
    n_split: int = 5
    n_retry: int = 3
    split_min_stat: float = 3.841459
    split_min_obs: int = 10
    split_min_events: int = 5
    leaf_min_obs: int = 5
    leaf_min_events: int = 1
    combo_strategy: str = "fast"

    def validate(self, p: int | None = None) -> "GrowParams":
        if self.mtry is None or self.mtry < 1:
            raise ValueError("mtry must be ≥ 1")
        if p is not None and self.mtry > p:
            raise ValueError(f"mtry must be <= number of predictors ({p})")
        if self.n_split < 1:
            raise ValueError("n_split must be >= 1")
        if self.n_retry < 0:
            raise ValueError("n_retry must be >= 0")
        if not self.split_min_stat > 0:
            raise ValueError("split_min_stat must be > 0")
        for name in ("split_min_obs", "split_min_events", "leaf_min_obs", "leaf_min_events"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.leaf_min_obs > self.split_min_obs:
            raise ValueError("leaf_min_obs must be <= split_min_obs")
        if self.leaf_min_events > self.split_min_events:
            raise ValueError("leaf_min_events must be <= split_min_events")
        if self.combo_strategy not in COMBO_STRATEGIES:
            raise ValueError(
                f"combo_strategy must be one of {sorted(COMBO_STRATEGIES)}, got {self.combo_strategy!r}"
            )
        return self


@dataclass(frozen=True)
class Internal:
    combo: LinearCombo
    cutpoint: float
    left: int
    right: int
    pvalues: np.ndarray | None = None
    stat: float = np.nan


@dataclass(frozen=True)
class Leaf:
    km_times: np.ndarray
    km_surv: np.ndarray
    km_chf: np.ndarray


@dataclass(eq=False)
class ObliqueTree:
    """Flat node store; node 0 is the root, children always have larger ids.

    Internal nodes have ``left[i] >= 0``. Combination ``i`` occupies
    ``combo_*[combo_ptr[i]:combo_ptr[i+1]]``; leaf curves live in
    ``leaf_*[leaf_ptr[i]:leaf_ptr[i+1]]``.
    """

    left: np.ndarray
    right: np.ndarray
    cutpoint: np.ndarray
    combo_ptr: np.ndarray
    combo_cols: np.ndarray
    combo_coefs: np.ndarray
    combo_pvals: np.ndarray
    leaf_ptr: np.ndarray
    leaf_times: np.ndarray
    leaf_surv: np.ndarray
    leaf_chf: np.ndarray
    stat: np.ndarray = None
    depth: np.ndarray = None
    n_obs: np.ndarray = None
    n_events: np.ndarray = None
    root: int = field(default=0)

    def __post_init__(self):
        n = self.left.shape[0]
        if self.stat is None:
            self.stat = np.full(n, np.nan)
        if self.n_obs is None:
            self.n_obs = np.full(n, np.nan)
        if self.n_events is None:
            self.n_events = np.full(n, np.nan)
        if self.depth is None:
            self.depth = _depths(self.left, self.right)

    @property
    def n_nodes(self) -> int:
        return int(self.left.shape[0])

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.left < 0))

    @property
    def max_depth_reached(self) -> int:
        return int(self.depth.max())

    def is_leaf(self, i: int) -> bool:
        return self.left[i] < 0

    def node(self, i: int):
        if self.left[i] < 0:
            a, b = self.leaf_ptr[i], self.leaf_ptr[i + 1]
            return Leaf(self.leaf_times[a:b], self.leaf_surv[a:b], self.leaf_chf[a:b])
        a, b = self.combo_ptr[i], self.combo_ptr[i + 1]
        return Internal(
            LinearCombo(self.combo_cols[a:b], self.combo_coefs[a:b]),
            float(self.cutpoint[i]),
            int(self.left[i]),
            int(self.right[i]),
            self.combo_pvals[a:b],
            float(self.stat[i]),
        )

    @property
    def nodes(self) -> list:
        return [self.node(i) for i in range(self.n_nodes)]

    @classmethod
    def from_nodes(cls, nodes) -> "ObliqueTree":
        """Assemble a tree from :class:`Internal` / :class:`Leaf` records (root first)."""
        n = len(nodes)
        left = np.full(n, -1, dtype=np.int64)
        right = np.full(n, -1, dtype=np.int64)
        cut = np.zeros(n)
        stat = np.full(n, np.nan)
        cptr = np.zeros(n + 1, dtype=np.int64)
        lptr = np.zeros(n + 1, dtype=np.int64)
        cols, coefs, pvals, lt, ls, lh = [], [], [], [], [], []
        parents = np.zeros(n, dtype=np.int64)
        for i, nd in enumerate(nodes):
            if isinstance(nd, Internal):
                for c in (nd.left, nd.right):
                    if not 0 < c < n or c == i:
                        raise ValueError(f"node {i}: invalid child id {c}")
                    parents[c] += 1
                if nd.left == nd.right:
                    raise ValueError(f"node {i}: children must be distinct")
                left[i], right[i], cut[i], stat[i] = nd.left, nd.right, nd.cutpoint, nd.stat
                k = len(nd.combo.cols)
                cols.extend(nd.combo.cols)
                coefs.extend(nd.combo.coefs)
                pv = np.full(k, np.nan) if nd.pvalues is None else np.asarray(nd.pvalues, float)
                pvals.extend(pv)
                cptr[i + 1] = cptr[i] + k
                lptr[i + 1] = lptr[i]
            else:
                t = np.asarray(nd.km_times, float)
                lt.extend(t)
                ls.extend(np.asarray(nd.km_surv, float))
                lh.extend(np.asarray(nd.km_chf, float))
                cptr[i + 1] = cptr[i]
                lptr[i + 1] = lptr[i] + t.size
        if n == 0 or parents[0] != 0 or np.any(parents[1:] != 1):
            raise ValueError("nodes do not form a binary tree rooted at node 0")
        return cls(left, right, cut, cptr, np.asarray(cols, dtype=np.int64),
                   np.asarray(coefs, float), np.asarray(pvals, float), lptr,
                   np.asarray(lt, float), np.asarray(ls, float), np.asarray(lh, float),
                   stat=stat)

    def with_coefs(self, coefs) -> "ObliqueTree":
        return replace(self, combo_coefs=np.asarray(coefs, dtype=np.float64))


def _depths(left, right):
    depth = np.zeros(left.shape[0], dtype=np.int64)
    stack = [0]
    while stack:
        i = stack.pop()
        if left[i] >= 0:
            depth[left[i]] = depth[right[i]] = depth[i] + 1
            stack.extend((int(left[i]), int(right[i])))
    return depth


def is_splittable(weights_in_node, status_in_node, params: GrowParams) -> bool:
    w = np.asarray(weights_in_node, dtype=np.float64)
    s = np.asarray(status_in_node, dtype=np.float64)
    return bool(w.sum() >= params.split_min_obs and (w * s).sum() >= params.split_min_events)


def kaplan_meier(time, status, weights=None):
    """Weighted product-limit survival and Nelson-Aalen hazard at unique event times."""
    time = np.asarray(time, dtype=np.float64)
    status = np.asarray(status, dtype=np.float64)
    w = np.ones_like(time) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.sum() <= 0:
        raise ValueError("weights must have a positive sum")
    o = time_order(time, status)
    return K.km_na(time[o], status[o], w[o])


def grow_tree(ds: SurvivalDataset, weights, params: GrowParams,
              rng: np.random.Generator) -> ObliqueTree:
    params.validate(ds.p)
    w = np.asarray(weights)
    if w.shape != (ds.n,):
        raise ValueError(f"weights must have length {ds.n}")
    if np.any(w < 0) or np.any(w != np.round(w)):
        raise ValueError("weights must be non-negative integers")
    o = ds.sort_index
    return _grow_sorted(ds.X[o], ds.time[o], ds.status[o].astype(np.float64),
                        w[o].astype(np.float64), params, rng)


def _grow_sorted(X, time, status, w, params: GrowParams, rng) -> ObliqueTree:
    if w.sum() <= 0:
        raise ValueError("all weights are zero")
    if (w * status).sum() < params.leaf_min_events:
        raise ValueError("too few weighted events to grow a tree")
    out = K.grow_tree(
        X, time, status, w, rng, params.mtry, params.n_split, params.n_retry,
        float(params.split_min_stat), float(params.split_min_obs),
        float(params.split_min_events), float(params.leaf_min_obs),
        float(params.leaf_min_events), COMBO_STRATEGIES[params.combo_strategy],
        CPH_MAX_ITER, CPH_EPSILON,
    )
    (left, right, cut, stat, depth, n_obs, n_ev, cptr, ccols, ccoefs, cpv,
     lptr, lt, ls, lh) = out
    return ObliqueTree(left, right, cut, cptr, ccols, ccoefs, cpv, lptr, lt, ls, lh,
                       stat=stat, depth=depth, n_obs=n_obs, n_events=n_ev)


def tree_leaf(tree: ObliqueTree, x) -> int:
    node = 0
    while tree.left[node] >= 0:
        acc = 0.0
        for k in range(tree.combo_ptr[node], tree.combo_ptr[node + 1]):
            acc += tree.combo_coefs[k] * x[tree.combo_cols[k]]
        node = tree.left[node] if acc <= tree.cutpoint[node] else tree.right[node]
    return int(node)


def predict_tree_survival(tree: ObliqueTree, x, horizon_times) -> np.ndarray:
    """Leaf survival curve for one observation, evaluated at ascending horizons."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("x contains non-finite values")
    h = np.asarray(horizon_times, dtype=np.float64)
    if np.any(np.diff(h) < 0):
        raise ValueError("horizon_times must be ascending")
    node = tree_leaf(tree, x)
    a, b = tree.leaf_ptr[node], tree.leaf_ptr[node + 1]
    times, surv = tree.leaf_times[a:b], tree.leaf_surv[a:b]
    idx = np.searchsorted(times, h, side="right") - 1
    return np.where(idx < 0, 1.0, surv[np.maximum(idx, 0)] if b > a else 1.0)
