"""Survival prediction metrics: concordance, IPCW Brier score, integrated Brier, IPA."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .obliquetree import kaplan_meier


class IPCWError(ValueError):
    """A censoring weight needed by a metric is 1/0."""


class StepFunction:
    """Right-continuous step function, ``before`` to the left of the first jump."""

    def __init__(self, times, values, before: float = 1.0):
        self.times = np.asarray(times, dtype=np.float64)
        self.values = np.asarray(values, dtype=np.float64)
        self.before = float(before)

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        idx = np.searchsorted(self.times, t, side="right") - 1
        vals = np.concatenate([[self.before], self.values])
        return vals[idx + 1]

    def left(self, t):
        """Left limit ``f(t-)``."""
        t = np.asarray(t, dtype=np.float64)
        idx = np.searchsorted(self.times, t, side="left") - 1
        vals = np.concatenate([[self.before], self.values])
        return vals[idx + 1]


def harrell_c(time, status, risk) -> float:
    time = np.asarray(time, dtype=np.float64)
    status = np.asarray(status, dtype=np.float64)
    risk = np.asarray(risk, dtype=np.float64)
    if not time.shape == status.shape == risk.shape:
        raise ValueError("time, status and risk must have equal length")
    num, den = K.harrell_counts(time, status, risk)
    if den == 0:
        raise ValueError("no usable pairs for concordance")
    return num / den


def censoring_km(time, status) -> StepFunction:
    """Kaplan-Meier estimate of the censoring survivor function."""
    status = np.asarray(status, dtype=np.float64)
    times, surv, _ = kaplan_meier(time, 1.0 - status)
    return StepFunction(times, surv)


def _ipcw(time, status, t, G):
    """Per-row weights for cases (T<=t, event) and non-cases (T>t)."""
    case = (time <= t) & (status == 1)
    ctrl = time > t
    g_case = G.left(time[case])
    if np.any(g_case <= 0) or (ctrl.any() and G(t) <= 0):
        raise IPCWError(f"IPCW weight undefined at horizon t={t!r}: censoring survival is 0")
    w = np.zeros(time.shape[0])
    w[case] = 1.0 / g_case
    if ctrl.any():
        w[ctrl] = 1.0 / G(t)
    return case, ctrl, w


def brier_t(surv_pred, time, status, t: float, G: StepFunction) -> float:
    """IPCW Brier score at horizon ``t``.

    Censored rows with ``T <= t`` contribute nothing; events are weighted by
    the left limit of the censoring survivor at their own time.
    """
    S = np.asarray(surv_pred, dtype=np.float64)
    time = np.asarray(time, dtype=np.float64)
    status = np.asarray(status)
    case, ctrl, w = _ipcw(time, status, t, G)
    terms = np.where(case, S**2 * w, 0.0) + np.where(ctrl, (1.0 - S) ** 2 * w, 0.0)
    return float(terms.sum() / S.shape[0])


def brier_curve(surv_matrix, time, status, grid, G: StepFunction) -> np.ndarray:
    """Brier score at each grid time; ``surv_matrix`` is rows x grid."""
    S = np.asarray(surv_matrix, dtype=np.float64)
    return np.array([brier_t(S[:, j], time, status, t, G) for j, t in enumerate(grid)])


def integration_bounds(time, status):
    """25th / 75th percentiles (linear interpolation) of the observed event times."""
    ev = np.asarray(time, dtype=np.float64)[np.asarray(status) == 1]
    t1, t2 = np.percentile(ev, [25, 75])
    return float(t1), float(t2)


def integration_grid(time, status, t1: float, t2: float) -> np.ndarray:
    ev = np.unique(np.asarray(time, dtype=np.float64)[np.asarray(status) == 1])
    inner = ev[(ev > t1) & (ev < t2)]
    return np.concatenate([[t1], inner, [t2]])


def integrated_brier(times, values, t1: float, t2: float) -> float:
    """Trapezoid average of a Brier curve over ``[t1, t2]``."""
    times = np.asarray(times, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if not t1 < t2:
        raise ValueError("need t1 < t2")
    if times.size < 2:
        raise ValueError("need at least 2 grid points")
    if times[0] > t1 or times[-1] < t2:
        raise ValueError("grid does not cover [t1, t2]")
    inside = (times > t1) & (times < t2)
    x = np.concatenate([[t1], times[inside], [t2]])
    y = np.concatenate([[np.interp(t1, times, values)], values[inside],
                        [np.interp(t2, times, values)]])
    return float(np.trapezoid(y, x) / (t2 - t1))


def ipa(ibs_model: float, ibs_reference: float) -> float:
    """Index of prediction accuracy, ``1 - ibs_model / ibs_reference``."""
    if ibs_reference == 0:
        raise ValueError("reference integrated Brier score is zero")
    return 1.0 - ibs_model / ibs_reference


def td_c_statistic(risk, time, status, t: float, G: StepFunction) -> float:
    """IPCW cumulative-case / dynamic-control concordance at horizon ``t``."""
    risk = np.asarray(risk, dtype=np.float64)
    time = np.asarray(time, dtype=np.float64)
    status = np.asarray(status)
    case, ctrl, w = _ipcw(time, status, t, G)
    if not case.any() or not ctrl.any():
        raise ValueError(f"no comparable case/non-case pairs at t={t!r}")
    rc, wc = risk[case], w[case]
    rn, wn = risk[ctrl], w[ctrl]
    # sort controls once; count strictly-lower and tied risks per case
    o = np.argsort(rn, kind="mergesort")
    rn, wn = rn[o], wn[o]
    cw = np.concatenate([[0.0], np.cumsum(wn)])
    lo = np.searchsorted(rn, rc, side="left")
    hi = np.searchsorted(rn, rc, side="right")
    num = np.sum(wc * (cw[lo] + 0.5 * (cw[hi] - cw[lo])))
    return float(num / (wc.sum() * wn.sum()))


@dataclass(frozen=True)
class EvalResult:
    harrell_c: float
    td_c: float
    td_c_time: float
    bs_times: np.ndarray
    bs_values: np.ndarray
    ibs: float
    ibs_reference: float
    ipa: float
    t1: float
    t2: float
    scale_by_100: bool = True

    def summary(self) -> dict:
        """Headline numbers; IPA and time-dependent C scaled by 100 when flagged."""
        k = 100.0 if self.scale_by_100 else 1.0
        return {
            "harrell_c": self.harrell_c * k,
            "td_c": self.td_c * k,
            "td_c_time": self.td_c_time,
            "ibs": self.ibs,
            "ipa": self.ipa * k,
            "t1": self.t1,
            "t2": self.t2,
        }


def evaluate(surv_fn, risk, time, status, train_time, train_status,
             td_time: float | None = None, t1: float | None = None,
             t2: float | None = None) -> EvalResult:
    """Score test-set predictions.

    ``surv_fn(grid)`` returns predicted survival (rows x grid). The IPA
    reference predicts the training Kaplan-Meier curve for every row.
    """
    time = np.asarray(time, dtype=np.float64)
    status = np.asarray(status)
    G = censoring_km(time, status)
    if t1 is None or t2 is None:
        b1, b2 = integration_bounds(time, status)
        t1 = b1 if t1 is None else t1
        t2 = b2 if t2 is None else t2
    grid = integration_grid(time, status, t1, t2)
    bs = brier_curve(surv_fn(grid), time, status, grid, G)
    ibs = integrated_brier(grid, bs, t1, t2)
    km_t, km_s, _ = kaplan_meier(train_time, train_status)
    ref_curve = StepFunction(km_t, km_s)(grid)
    ref = np.broadcast_to(ref_curve, (time.shape[0], grid.shape[0]))
    ibs0 = integrated_brier(grid, brier_curve(ref, time, status, grid, G), t1, t2)
    if td_time is None:
        ev = np.asarray(train_time, dtype=np.float64)[np.asarray(train_status) == 1]
        td_time = float(np.median(ev))
    return EvalResult(
        harrell_c=harrell_c(time, status, risk),
        td_c=td_c_statistic(risk, time, status, td_time, G),
        td_c_time=float(td_time),
        bs_times=grid,
        bs_values=bs,
        ibs=ibs,
        ibs_reference=ibs0,
        ipa=ipa(ibs, ibs0),
        t1=float(t1),
        t2=float(t2),
    )
