"""Newton-Raphson scoring of the weighted Cox partial likelihood (Breslow ties)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .survdata import time_order


class CollinearError(ValueError):
    """Information matrix has no usable pivot."""


class NoEventsError(ValueError):
    pass


class DivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class CoxStepResult:
    beta: np.ndarray
    score: np.ndarray
    hessian: np.ndarray
    std_err: np.ndarray
    pvalues: np.ndarray
    n_iter: int
    loglik: float


def _prepare(X_sub, time, status, weights):
    X_sub = np.asarray(X_sub, dtype=np.float64)
    if X_sub.ndim == 1:
        X_sub = X_sub[:, None]
    time = np.asarray(time, dtype=np.float64)
    status = np.asarray(status, dtype=np.float64)
    if weights is None:
        weights = np.ones_like(time)
    weights = np.asarray(weights, dtype=np.float64)
    if X_sub.shape[1] < 1:
        raise ValueError("need at least one predictor column")
    if np.any(weights < 0):
        raise ValueError("weights must be non-negative")
    order = time_order(time, status)
    return (np.ascontiguousarray(X_sub[order]), time[order], status[order], weights[order])


def _raise_for(code):
    if code == K.COX_NO_EVENTS:
        raise NoEventsError("no events: weighted event count is zero")
    if code == K.COX_COLLINEAR:
        raise CollinearError("collinear predictors: information matrix is singular")
    if code == K.COX_DIVERGED:
        raise DivergedError("diverged: log partial likelihood became non-finite")


def log_partial_likelihood(X_sub, time, status, weights, beta):
    """Breslow log partial likelihood at ``beta``."""
    x, t, s, w = _prepare(X_sub, time, status, weights)
    ll, _, _ = K.cox_eval(x, t, s, w, np.asarray(beta, dtype=np.float64), True)
    return ll


def newton_raphson_step(X_sub, time, status, weights=None, beta_init=None) -> CoxStepResult:
    """One scoring update ``beta + H^-1 U`` evaluated at ``beta_init``.

    ``score``, ``hessian`` and ``loglik`` refer to ``beta_init``; standard
    errors come from the same information matrix. With ``beta_init = 0`` the
    linear predictor is never exponentiated.
    """
    x, t, s, w = _prepare(X_sub, time, status, weights)
    k = x.shape[1]
    zero = beta_init is None or not np.any(beta_init)
    b0 = np.zeros(k) if beta_init is None else np.asarray(beta_init, dtype=np.float64).copy()
    if b0.shape != (k,):
        raise ValueError(f"beta_init must have length {k}")
    code, beta, U, H, ll, se, pv, _ = K.cox_step(x, t, s, w, b0, zero)
    _raise_for(code)
    return CoxStepResult(beta, U, H, se, pv, 1, float(ll))


def newton_raphson_fit(X_sub, time, status, weights=None, max_iter: int = 20,
                       epsilon: float = 1e-9) -> CoxStepResult:
    """Iterate scoring updates from zero until the relative log-likelihood
    change drops below ``epsilon`` or ``max_iter`` updates were made.

    Updates that lower the log-likelihood are halved (at most 5 times).
    Columns are centered and scaled internally; results are reported on the
    original scale and evaluated at the returned ``beta``.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    if max_iter == 1:
        return newton_raphson_step(X_sub, time, status, weights)
    x, t, s, w = _prepare(X_sub, time, status, weights)
    code, beta, U, H, ll, se, pv, n_iter, _ = K.cox_fit(x, t, s, w, int(max_iter), float(epsilon))
    _raise_for(code)
    return CoxStepResult(beta, U, H, se, pv, int(n_iter), float(ll))


def loglik_trace(X_sub, time, status, weights=None, max_iter: int = 20, epsilon: float = 1e-9):
    """Accepted log-likelihood values of :func:`newton_raphson_fit`, one per iteration."""
    x, t, s, w = _prepare(X_sub, time, status, weights)
    code, *_, n_iter, trace = K.cox_fit(x, t, s, w, int(max_iter), float(epsilon))
    _raise_for(code)
    return trace[~np.isnan(trace)]
