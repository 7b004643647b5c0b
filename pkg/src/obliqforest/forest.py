"""Oblique random survival forest: bootstrap, growth, prediction, persistence."""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import _kernels as K
from .obliquetree import GrowParams, ObliqueTree, _grow_sorted
from .survdata import SurvivalDataset, event_times

SCHEMA_VERSION = 1
BOOTSTRAP_MODES = ("multinomial", "uniform_0_10")


class ModelFormatError(ValueError):
    pass


def default_mtry(p: int) -> int:
    return max(1, int(math.floor(math.sqrt(p) + 0.5)))


def default_threads() -> int:
    env = os.environ.get("OBLIQFOREST_THREADS")
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


@dataclass(frozen=True)
class ForestParams:
    n_tree: int = 500
    grow: GrowParams = field(default_factory=lambda: GrowParams(mtry=None))
    seed: int = 0
    bootstrap_mode: str = "multinomial"
    # runtime hint only; never serialized so results do not depend on it
    n_threads_hint: int = field(default=0, compare=False)

    def resolve(self, p: int) -> "ForestParams":
        """Fill the data-dependent mtry default and validate."""
        grow = self.grow
        if grow.mtry is None:
            grow = replace(grow, mtry=default_mtry(p))
        if self.n_tree < 1:
            raise ValueError("n_tree must be >= 1")
        if self.bootstrap_mode not in BOOTSTRAP_MODES:
            raise ValueError(f"bootstrap_mode must be one of {BOOTSTRAP_MODES}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        grow.validate(p)
        return replace(self, grow=grow)


def tree_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for one tree, independent of scheduling."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


def bootstrap_weights(n: int, mode: str, rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    if mode == "multinomial":
        return rng.multinomial(n, np.full(n, 1.0 / n)).astype(np.int64)
    if mode == "uniform_0_10":
        return rng.integers(0, 11, size=n).astype(np.int64)
    raise ValueError(f"unknown bootstrap mode {mode!r}")


@dataclass(eq=False)
class _Packed:
    tree_off: np.ndarray
    left: np.ndarray
    right: np.ndarray
    cut: np.ndarray
    cptr: np.ndarray
    ccols: np.ndarray
    ccoefs: np.ndarray
    cpvals: np.ndarray
    lptr: np.ndarray
    ltimes: np.ndarray
    lsurv: np.ndarray
    lchf: np.ndarray
    mort: np.ndarray


def _pack(trees, grid) -> _Packed:
    sizes = np.array([t.n_nodes for t in trees], dtype=np.int64)
    tree_off = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    zero = np.zeros(1, dtype=np.int64)
    lefts, rights, cptrs, lptrs = [], [], [zero], [zero]
    c_base = l_base = 0
    for t, off in zip(trees, tree_off[:-1]):
        lefts.append(np.where(t.left >= 0, t.left + off, -1))
        rights.append(np.where(t.right >= 0, t.right + off, -1))
        cptrs.append(t.combo_ptr[1:] + c_base)
        lptrs.append(t.leaf_ptr[1:] + l_base)
        c_base += t.combo_ptr[-1]
        l_base += t.leaf_ptr[-1]
    cat = np.concatenate
    left = cat(lefts).astype(np.int64)
    lptr = cat(lptrs).astype(np.int64)
    ltimes = cat([t.leaf_times for t in trees])
    lchf = cat([t.leaf_chf for t in trees])
    return _Packed(
        tree_off=tree_off,
        left=left,
        right=cat(rights).astype(np.int64),
        cut=cat([t.cutpoint for t in trees]),
        cptr=cat(cptrs).astype(np.int64),
        ccols=cat([t.combo_cols for t in trees]).astype(np.int64),
        ccoefs=cat([t.combo_coefs for t in trees]),
        cpvals=cat([t.combo_pvals for t in trees]),
        lptr=lptr,
        ltimes=ltimes,
        lsurv=cat([t.leaf_surv for t in trees]),
        lchf=lchf,
        mort=K.leaf_mortality(left, lptr, ltimes, lchf, np.asarray(grid, dtype=np.float64)),
    )


@dataclass(eq=False)
class Forest:
    trees: list
    params: ForestParams
    col_names: tuple
    train_event_times: np.ndarray
    inbag_weights: np.ndarray
    _packed: _Packed = field(default=None, repr=False)

    @property
    def n_tree(self) -> int:
        return len(self.trees)

    @property
    def p(self) -> int:
        return len(self.col_names)

    @property
    def packed(self) -> _Packed:
        if self._packed is None:
            self._packed = _pack(self.trees, self.train_event_times)
        return self._packed

    # ---------------------------------------------------------------- routing
    def _check_X(self, X):
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.p:
            raise ValueError(f"expected {self.p} predictor columns, got {X.shape[1]}")
        if not np.all(np.isfinite(X)):
            raise ValueError("X contains non-finite values")
        return X

    def leaves(self, X, coefs=None, oob: bool = False) -> np.ndarray:
        """Global leaf ids (rows x trees). ``coefs`` overrides the packed
        coefficients without touching the forest; ``oob`` masks in-bag pairs."""
        pk = self.packed
        X = self._check_X(X)
        coefs = pk.ccoefs if coefs is None else np.asarray(coefs, dtype=np.float64)
        if oob:
            if X.shape[0] != self.inbag_weights.shape[1]:
                raise ValueError("out-of-bag prediction needs the training rows")
            mask = self.inbag_weights
        else:
            mask = np.zeros((1, 1), dtype=self.inbag_weights.dtype)
        return K.route(X, pk.tree_off, pk.left, pk.right, pk.cut, pk.cptr, pk.ccols,
                       coefs, mask, oob)

    def survival_from_leaves(self, leaves, horizon_times):
        h = np.asarray(horizon_times, dtype=np.float64).ravel()
        if np.any(np.diff(h) < 0):
            raise ValueError("horizon_times must be ascending")
        pk = self.packed
        return K.leaf_mean_surv(leaves, pk.lptr, pk.ltimes, pk.lsurv, h)

    def mortality_from_leaves(self, leaves):
        return K.leaf_mean_value(leaves, self.packed.mort)


def fit(ds: SurvivalDataset, params: ForestParams = ForestParams(), n_threads: int | None = None) -> Forest:
    """Grow ``params.n_tree`` trees; tree ``t`` draws from stream ``(seed, t)``."""
    params = params.resolve(ds.p)
    n_threads = n_threads or params.n_threads_hint or default_threads()
    o = ds.sort_index
    Xs, ts = ds.X[o], ds.time[o]
    ss = ds.status[o].astype(np.float64)

    def one(t):
        rng = tree_rng(params.seed, t)
        w = bootstrap_weights(ds.n, params.bootstrap_mode, rng)
        tree = _grow_sorted(Xs, ts, ss, w[o].astype(np.float64), params.grow, rng)
        return tree, w

    results = [one(0)]  # compiles kernels on the calling thread
    if params.n_tree > 1:
        if n_threads > 1:
            with ThreadPoolExecutor(max_workers=n_threads) as ex:
                results.extend(ex.map(one, range(1, params.n_tree)))
        else:
            results.extend(one(t) for t in range(1, params.n_tree))
    trees = [r[0] for r in results]
    inbag = np.stack([r[1] for r in results]).astype(np.int16)
    return Forest(trees, params, ds.col_names, event_times(ds), inbag)


def predict_survival(forest: Forest, X_new, horizon_times) -> np.ndarray:
    surv, _ = forest.survival_from_leaves(forest.leaves(X_new), horizon_times)
    return surv


def predict_mortality(forest: Forest, X_new) -> np.ndarray:
    """Ensemble cumulative hazard summed over the training event times."""
    return forest.mortality_from_leaves(forest.leaves(X_new))


def oob_predict(forest: Forest, ds: SurvivalDataset, horizon_times):
    """Out-of-bag survival, mortality and per-row contributing tree counts.

    Rows never out of bag get NaN predictions and a count of zero.
    """
    leaves = forest.leaves(ds.X, oob=True)
    surv, counts = forest.survival_from_leaves(leaves, horizon_times)
    mort = forest.mortality_from_leaves(leaves)
    return surv, mort, counts


# ------------------------------------------------------------------ persistence


def _num(v):
    v = float(v)
    return None if math.isnan(v) else v


def _tree_to_dict(tree: ObliqueTree) -> dict:
    nodes = []
    for i in range(tree.n_nodes):
        base = {"id": i, "n_obs": _num(tree.n_obs[i]), "n_events": _num(tree.n_events[i])}
        if tree.left[i] >= 0:
            a, b = tree.combo_ptr[i], tree.combo_ptr[i + 1]
            base.update(
                kind="internal",
                cols=[int(c) for c in tree.combo_cols[a:b]],
                coefs=[_num(c) for c in tree.combo_coefs[a:b]],
                pvalues=[_num(c) for c in tree.combo_pvals[a:b]],
                cutpoint=_num(tree.cutpoint[i]),
                stat=_num(tree.stat[i]),
                left=int(tree.left[i]),
                right=int(tree.right[i]),
            )
        else:
            a, b = tree.leaf_ptr[i], tree.leaf_ptr[i + 1]
            base.update(
                kind="leaf",
                times=[float(v) for v in tree.leaf_times[a:b]],
                surv=[float(v) for v in tree.leaf_surv[a:b]],
                chf=[float(v) for v in tree.leaf_chf[a:b]],
            )
        nodes.append(base)
    return {"nodes": nodes}


def _tree_from_dict(d: dict) -> ObliqueTree:
    nodes = d["nodes"]
    n = len(nodes)
    left = np.full(n, -1, dtype=np.int64)
    right = np.full(n, -1, dtype=np.int64)
    cut = np.zeros(n)
    stat = np.full(n, np.nan)
    n_obs = np.full(n, np.nan)
    n_ev = np.full(n, np.nan)
    cptr = np.zeros(n + 1, dtype=np.int64)
    lptr = np.zeros(n + 1, dtype=np.int64)
    cols, coefs, pvals, lt, ls, lh = [], [], [], [], [], []
    f = lambda v: np.nan if v is None else float(v)  # noqa: E731
    for i, nd in enumerate(nodes):
        if nd["id"] != i:
            raise ModelFormatError("malformed model: node ids out of order")
        n_obs[i], n_ev[i] = f(nd.get("n_obs")), f(nd.get("n_events"))
        if nd["kind"] == "internal":
            left[i], right[i] = nd["left"], nd["right"]
            cut[i], stat[i] = f(nd["cutpoint"]), f(nd.get("stat"))
            cols.extend(nd["cols"])
            coefs.extend(f(c) for c in nd["coefs"])
            pvals.extend(f(c) for c in nd["pvalues"])
            cptr[i + 1] = cptr[i] + len(nd["cols"])
            lptr[i + 1] = lptr[i]
        elif nd["kind"] == "leaf":
            lt.extend(nd["times"])
            ls.extend(nd["surv"])
            lh.extend(nd["chf"])
            cptr[i + 1] = cptr[i]
            lptr[i + 1] = lptr[i] + len(nd["times"])
        else:
            raise ModelFormatError(f"malformed model: unknown node kind {nd['kind']!r}")
    for arr in (left, right):
        if np.any(arr >= n):
            raise ModelFormatError("malformed model: child id out of range")
    return ObliqueTree(left, right, cut, cptr, np.asarray(cols, dtype=np.int64),
                       np.asarray(coefs, float), np.asarray(pvals, float), lptr,
                       np.asarray(lt, float), np.asarray(ls, float), np.asarray(lh, float),
                       stat=stat, n_obs=n_obs, n_events=n_ev)


def _canonical(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)


def _params_to_dict(params: ForestParams) -> dict:
    d = asdict(params)
    d.pop("n_threads_hint")
    return d


def _params_from_dict(d: dict) -> ForestParams:
    return ForestParams(
        n_tree=int(d["n_tree"]),
        grow=GrowParams(**d["grow"]),
        seed=int(d["seed"]),
        bootstrap_mode=d["bootstrap_mode"],
    )


def to_document(forest: Forest) -> dict:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "params": _params_to_dict(forest.params),
        "col_names": list(forest.col_names),
        "train_event_times": [float(t) for t in forest.train_event_times],
        "inbag_weights": forest.inbag_weights.tolist(),
        "trees": [_tree_to_dict(t) for t in forest.trees],
    }
    doc["checksum"] = "sha256:" + hashlib.sha256(_canonical(doc).encode()).hexdigest()
    return doc


def save(forest: Forest, path) -> None:
    text = _canonical(to_document(forest))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
        fh.write("\n")


def load(path) -> Forest:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"malformed model: {e}") from None
    if not isinstance(doc, dict) or "schema_version" not in doc:
        raise ModelFormatError("malformed model: missing schema_version")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise ModelFormatError(f"unsupported version: {doc['schema_version']}")
    checksum = doc.pop("checksum", None)
    if checksum is None:
        raise ModelFormatError("malformed model: missing checksum")
    if "sha256:" + hashlib.sha256(_canonical(doc).encode()).hexdigest() != checksum:
        raise ModelFormatError("checksum failure: model file was modified or corrupted")
    try:
        params = _params_from_dict(doc["params"])
        trees = [_tree_from_dict(t) for t in doc["trees"]]
        inbag = np.asarray(doc["inbag_weights"], dtype=np.int16)
        forest = Forest(trees, params, tuple(doc["col_names"]),
                        np.asarray(doc["train_event_times"], dtype=np.float64), inbag)
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ModelFormatError):
            raise
        raise ModelFormatError(f"malformed model: {e}") from None
    if inbag.shape[0] != len(trees):
        raise ModelFormatError("malformed model: inbag_weights do not match trees")
    return forest
