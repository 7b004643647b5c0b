"""Compiled inner loops shared by coxscore, splitfind, obliquetree and forest.

All row-indexed inputs are expected in ascending time order with events
before censorings at tied times. Weights are frequency weights stored as
float64 (integral values).
"""

import math

import numba
import numpy as np
from numba import njit, prange

# the bundled TBB is too old; prefer OpenMP without a warning
numba.config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]

# status codes returned by the Cox kernels
COX_OK = 0
COX_COLLINEAR = 1
COX_NO_EVENTS = 2
COX_DIVERGED = 3

COMBO_FAST = 0
COMBO_CPH = 1
COMBO_RANDOM = 2

PIVOT_TOL = 1e-12


# --------------------------------------------------------------------------
# Cox partial likelihood


@njit(nogil=True, cache=True, error_model="numpy")
def cox_eval(x, time, status, w, beta, use_exp):
    """Breslow log partial likelihood, score and observed information."""
    n, k = x.shape
    U = np.zeros(k)
    H = np.zeros((k, k))
    S1 = np.zeros(k)
    S2 = np.zeros((k, k))
    xd = np.zeros(k)
    S0 = 0.0
    ll = 0.0
    i = n - 1
    while i >= 0:
        t = time[i]
        d = 0.0
        eta_d = 0.0
        for a in range(k):
            xd[a] = 0.0
        j = i
        while j >= 0 and time[j] == t:
            wj = w[j]
            if wj > 0:
                eta = 0.0
                r = wj
                if use_exp:
                    for a in range(k):
                        eta += x[j, a] * beta[a]
                    r = wj * np.exp(eta)
                S0 += r
                for a in range(k):
                    ra = r * x[j, a]
                    S1[a] += ra
                    for b in range(a + 1):
                        S2[a, b] += ra * x[j, b]
                if status[j] > 0:
                    d += wj
                    eta_d += wj * eta
                    for a in range(k):
                        xd[a] += wj * x[j, a]
            j -= 1
        if d > 0:
            ll += eta_d - d * np.log(S0)
            for a in range(k):
                ma = S1[a] / S0
                U[a] += xd[a] - d * ma
                for b in range(a + 1):
                    H[a, b] += d * (S2[a, b] / S0 - ma * (S1[b] / S0))
        i = j
    for a in range(k):
        for b in range(a):
            H[b, a] = H[a, b]
    return ll, U, H


@njit(nogil=True, cache=True, error_model="numpy")
def ldl_factor(H, tol):
    """In-place LDL' factorization; singular pivots are zeroed. Returns rank."""
    k = H.shape[0]
    A = H.copy()
    big = 0.0
    for i in range(k):
        if abs(A[i, i]) > big:
            big = abs(A[i, i])
    eps = tol * big
    rank = 0
    for i in range(k):
        pivot = A[i, i]
        if not np.isfinite(pivot) or pivot <= eps or big == 0.0:
            A[i, i] = 0.0
            for j in range(i + 1, k):
                A[j, i] = 0.0
            continue
        rank += 1
        for j in range(i + 1, k):
            temp = A[j, i] / pivot
            A[j, i] = temp
            A[j, j] -= temp * temp * pivot
            for m in range(j + 1, k):
                A[m, j] -= temp * A[m, i]
    return A, rank


@njit(nogil=True, cache=True, error_model="numpy")
def ldl_solve(A, y):
    k = A.shape[0]
    z = y.copy()
    for i in range(k):
        temp = z[i]
        for j in range(i):
            temp -= z[j] * A[i, j]
        z[i] = temp
    for i in range(k - 1, -1, -1):
        if A[i, i] == 0.0:
            z[i] = 0.0
        else:
            temp = z[i] / A[i, i]
            for j in range(i + 1, k):
                temp -= z[j] * A[j, i]
            z[i] = temp
    return z


@njit(nogil=True, cache=True, error_model="numpy")
def ldl_inverse_diag(A):
    k = A.shape[0]
    out = np.zeros(k)
    e = np.zeros(k)
    for i in range(k):
        if A[i, i] == 0.0:
            out[i] = np.nan
            continue
        e[:] = 0.0
        e[i] = 1.0
        out[i] = ldl_solve(A, e)[i]
    return out


@njit(nogil=True, cache=True, error_model="numpy")
def _wald_pvalues(beta, inv_diag, pvals, se):
    for a in range(beta.shape[0]):
        v = inv_diag[a]
        if not v > 0:
            se[a] = np.nan
            pvals[a] = 1.0
            continue
        se[a] = np.sqrt(v)
        pvals[a] = math.erfc(abs(beta[a]) / se[a] / np.sqrt(2.0))


@njit(nogil=True, cache=True, error_model="numpy")
def cox_step(x, time, status, w, beta0, zero_start):
    """One Newton-Raphson update. Returns (code, beta1, U, H, ll, se, pvals, rank)."""
    k = x.shape[1]
    ll, U, H = cox_eval(x, time, status, w, beta0, not zero_start)
    beta1 = beta0.copy()
    se = np.full(k, np.nan)
    pv = np.ones(k)
    d = 0.0
    for i in range(time.shape[0]):
        d += w[i] * status[i]
    if d <= 0:
        return COX_NO_EVENTS, beta1, U, H, ll, se, pv, 0
    A, rank = ldl_factor(H, PIVOT_TOL)
    if rank == 0:
        return COX_COLLINEAR, beta1, U, H, ll, se, pv, 0
    step = ldl_solve(A, U)
    for a in range(k):
        if A[a, a] == 0.0:
            beta1[a] = 0.0
        else:
            beta1[a] = beta0[a] + step[a]
    inv = ldl_inverse_diag(A)
    _wald_pvalues(beta1, inv, pv, se)
    return COX_OK, beta1, U, H, ll, se, pv, rank


@njit(nogil=True, cache=True, error_model="numpy")
def cox_fit(x, time, status, w, max_iter, eps):
    """Iterated Newton-Raphson with step halving on centered/scaled columns.

    Returns (code, beta, U, H, ll, se, pvals, n_iter, trace) on the original
    scale; trace holds the accepted log-likelihood sequence.
    """
    n, k = x.shape
    wsum = 0.0
    d = 0.0
    for i in range(n):
        wsum += w[i]
        d += w[i] * status[i]
    mean = np.zeros(k)
    sd = np.ones(k)
    trace = np.full(max_iter + 1, np.nan)
    if d <= 0:
        return (COX_NO_EVENTS, np.zeros(k), np.zeros(k), np.zeros((k, k)), 0.0,
                np.full(k, np.nan), np.ones(k), 0, trace)
    for a in range(k):
        m = 0.0
        for i in range(n):
            m += w[i] * x[i, a]
        m /= wsum
        v = 0.0
        for i in range(n):
            v += w[i] * (x[i, a] - m) ** 2
        v /= wsum
        mean[a] = m
        sd[a] = np.sqrt(v) if v > 0 else 1.0
    xs = np.empty((n, k))
    for i in range(n):
        for a in range(k):
            xs[i, a] = (x[i, a] - mean[a]) / sd[a]

    beta = np.zeros(k)
    ll, U, H = cox_eval(xs, time, status, w, beta, False)
    trace[0] = ll
    A, rank = ldl_factor(H, PIVOT_TOL)
    if rank == 0:
        return (COX_COLLINEAR, beta, U, H, ll, np.full(k, np.nan), np.ones(k), 0, trace)
    n_iter = 0
    code = COX_OK
    while n_iter < max_iter:
        step = ldl_solve(A, U)
        new = beta + step
        halvings = 0
        accepted = False
        ll_new = 0.0
        U_new = U
        H_new = H
        while True:
            ll_new, U_new, H_new = cox_eval(xs, time, status, w, new, True)
            if np.isfinite(ll_new) and ll_new >= ll:
                accepted = True
                break
            if halvings >= 5:
                break
            halvings += 1
            new = 0.5 * (beta + new)
        n_iter += 1
        if not accepted:
            if not np.isfinite(ll_new):
                code = COX_DIVERGED
            break
        converged = abs(ll_new - ll) < eps * abs(ll_new)
        beta = new
        ll, U, H = ll_new, U_new, H_new
        trace[n_iter] = ll
        A, rank = ldl_factor(H, PIVOT_TOL)
        if converged or rank == 0:
            break
    for a in range(k):
        if A[a, a] == 0.0:
            beta[a] = 0.0
    inv = ldl_inverse_diag(A)
    se = np.full(k, np.nan)
    pv = np.ones(k)
    _wald_pvalues(beta, inv, pv, se)
    # back to the original scale
    beta_o = beta / sd
    se_o = se / sd
    U_o = U * sd
    H_o = H * np.outer(sd, sd)
    return code, beta_o, U_o, H_o, ll, se_o, pv, n_iter, trace


# --------------------------------------------------------------------------
# log-rank splitting


@njit(nogil=True, cache=True, error_model="numpy")
def logrank_stat(eta, time, status, w, cut):
    """Weighted two-sample log-rank chi-square for groups eta <= cut vs eta > cut."""
    n = time.shape[0]
    n_risk = 0.0
    n_left = 0.0
    for i in range(n):
        n_risk += w[i]
        if eta[i] <= cut:
            n_left += w[i]
    oe = 0.0
    v = 0.0
    i = 0
    while i < n:
        t = time[i]
        d = 0.0
        d_left = 0.0
        rm = 0.0
        rm_left = 0.0
        j = i
        while j < n and time[j] == t:
            wj = w[j]
            left = eta[j] <= cut
            if status[j] > 0:
                d += wj
                if left:
                    d_left += wj
            rm += wj
            if left:
                rm_left += wj
            j += 1
        if d > 0 and n_risk > 0:
            frac = n_left / n_risk
            oe += d_left - d * frac
            if n_risk > 1:
                v += d * frac * (1.0 - frac) * (n_risk - d) / (n_risk - 1.0)
        n_risk -= rm
        n_left -= rm_left
        i = j
    if v <= 0:
        return 0.0
    return oe * oe / v


@njit(nogil=True, cache=True, error_model="numpy")
def valid_cutpoints(eta, status, w, min_obs, min_events):
    """Unique eta values leaving enough weighted obs/events on both sides."""
    n = eta.shape[0]
    order = np.argsort(eta, kind="mergesort")
    tot_n = 0.0
    tot_e = 0.0
    for i in range(n):
        tot_n += w[i]
        tot_e += w[i] * status[i]
    out = np.empty(n)
    m = 0
    cum_n = 0.0
    cum_e = 0.0
    i = 0
    while i < n:
        v = eta[order[i]]
        while i < n and eta[order[i]] == v:
            r = order[i]
            cum_n += w[r]
            cum_e += w[r] * status[r]
            i += 1
        if i == n:
            break
        if (cum_n >= min_obs and tot_n - cum_n >= min_obs
                and cum_e >= min_events and tot_e - cum_e >= min_events):
            out[m] = v
            m += 1
    return out[:m]


@njit(nogil=True, cache=True, error_model="numpy")
def sample_without_replacement(rng, values, size):
    m = values.shape[0]
    buf = values.copy()
    take = min(size, m)
    for i in range(take):
        j = rng.integers(i, m)
        tmp = buf[i]
        buf[i] = buf[j]
        buf[j] = tmp
    return buf[:take]


@njit(nogil=True, cache=True, error_model="numpy")
def best_of(eta, time, status, w, candidates):
    best_c = np.nan
    best_s = -1.0
    for c in candidates:
        s = logrank_stat(eta, time, status, w, c)
        if s > best_s or (s == best_s and c < best_c):
            best_s = s
            best_c = c
    return best_c, best_s


# --------------------------------------------------------------------------
# Kaplan-Meier / Nelson-Aalen


@njit(nogil=True, cache=True, error_model="numpy")
def km_na(time, status, w):
    """Weighted product-limit and Nelson-Aalen at each unique event time."""
    n = time.shape[0]
    n_risk = 0.0
    for i in range(n):
        n_risk += w[i]
    times = np.empty(n)
    surv = np.empty(n)
    chf = np.empty(n)
    m = 0
    s = 1.0
    h = 0.0
    i = 0
    while i < n:
        t = time[i]
        d = 0.0
        rm = 0.0
        j = i
        while j < n and time[j] == t:
            d += w[j] * status[j]
            rm += w[j]
            j += 1
        if d > 0 and n_risk > 0:
            s *= 1.0 - d / n_risk
            h += d / n_risk
            times[m] = t
            surv[m] = s
            chf[m] = h
            m += 1
        n_risk -= rm
        i = j
    return times[:m], surv[:m], chf[:m]


# --------------------------------------------------------------------------
# tree growth


@njit(nogil=True, cache=True, error_model="numpy")
def grow_tree(X, time, status, w_all, rng, mtry, n_split, n_retry, split_min_stat,
              split_min_obs, split_min_events, leaf_min_obs, leaf_min_events,
              combo, cph_max_iter, cph_eps):
    p = X.shape[1]
    n_in = 0
    for i in range(w_all.shape[0]):
        if w_all[i] > 0:
            n_in += 1
    rows = np.empty(n_in, dtype=np.int64)
    m = 0
    for i in range(w_all.shape[0]):
        if w_all[i] > 0:
            rows[m] = i
            m += 1

    max_nodes = 2 * n_in + 1
    left = np.full(max_nodes, -1, dtype=np.int64)
    right = np.full(max_nodes, -1, dtype=np.int64)
    cut = np.zeros(max_nodes)
    stat = np.zeros(max_nodes)
    depth = np.zeros(max_nodes, dtype=np.int64)
    n_obs = np.zeros(max_nodes)
    n_ev = np.zeros(max_nodes)
    start = np.zeros(max_nodes, dtype=np.int64)
    end = np.zeros(max_nodes, dtype=np.int64)
    pending = np.zeros(max_nodes, dtype=np.bool_)
    combo_cols = np.empty(max_nodes * mtry, dtype=np.int64)
    combo_coefs = np.empty(max_nodes * mtry)
    combo_pv = np.empty(max_nodes * mtry)
    leaf_len = np.zeros(max_nodes, dtype=np.int64)
    leaf_times = np.empty(n_in + 1)
    leaf_surv = np.empty(n_in + 1)
    leaf_chf = np.empty(n_in + 1)

    xbuf = np.empty((n_in, mtry))
    tbuf = np.empty(n_in)
    sbuf = np.empty(n_in)
    wbuf = np.empty(n_in)
    eta = np.empty(n_in)
    tmp_rows = np.empty(n_in, dtype=np.int64)
    col_pool = np.arange(p)
    cols = np.empty(mtry, dtype=np.int64)
    coefs = np.empty(mtry)
    pv = np.empty(mtry)
    n_combo = 0
    n_leafv = 0

    n_nodes = 1
    start[0] = 0
    end[0] = n_in
    tot_n = 0.0
    tot_e = 0.0
    for r in rows:
        tot_n += w_all[r]
        tot_e += w_all[r] * status[r]
    n_obs[0] = tot_n
    n_ev[0] = tot_e
    pending[0] = tot_n >= split_min_obs and tot_e >= split_min_events

    cur = 0
    while cur < n_nodes:
        s0 = start[cur]
        s1 = end[cur]
        nn = s1 - s0
        split_done = False
        if pending[cur]:
            for i in range(nn):
                r = rows[s0 + i]
                tbuf[i] = time[r]
                sbuf[i] = status[r]
                wbuf[i] = w_all[r]
            tn = tbuf[:nn]
            sn = sbuf[:nn]
            wn = wbuf[:nn]
            xn = xbuf[:nn]
            en = eta[:nn]
            for attempt in range(n_retry + 1):
                # mtry columns without replacement
                for i in range(mtry):
                    j = rng.integers(i, p)
                    tmpc = col_pool[i]
                    col_pool[i] = col_pool[j]
                    col_pool[j] = tmpc
                    cols[i] = col_pool[i]
                for i in range(nn):
                    r = rows[s0 + i]
                    for a in range(mtry):
                        xn[i, a] = X[r, cols[a]]
                ok = True
                if combo == COMBO_FAST:
                    code, b, U, H, ll, se, pvals, rank = cox_step(
                        xn, tn, sn, wn, np.zeros(mtry), True)
                    if code != COX_OK:
                        ok = False
                    else:
                        coefs[:] = b
                        pv[:] = pvals
                elif combo == COMBO_CPH:
                    code, b, U, H, ll, se, pvals, it, tr = cox_fit(
                        xn, tn, sn, wn, cph_max_iter, cph_eps)
                    if code != COX_OK:
                        ok = False
                    else:
                        coefs[:] = b
                        pv[:] = pvals
                else:
                    wsum = 0.0
                    for i in range(nn):
                        wsum += wn[i]
                    for a in range(mtry):
                        u = rng.uniform(-1.0, 1.0)
                        mu = 0.0
                        for i in range(nn):
                            mu += wn[i] * xn[i, a]
                        mu /= wsum
                        var = 0.0
                        for i in range(nn):
                            var += wn[i] * (xn[i, a] - mu) ** 2
                        var /= wsum
                        coefs[a] = u / np.sqrt(var) if var > 0 else 0.0
                        pv[a] = np.nan
                if ok:
                    nz = False
                    for a in range(mtry):
                        if coefs[a] != 0.0:
                            nz = True
                    ok = nz
                if not ok:
                    continue
                for i in range(nn):
                    acc = 0.0
                    for a in range(mtry):
                        acc += xn[i, a] * coefs[a]
                    en[i] = acc
                valid = valid_cutpoints(en, sn, wn, leaf_min_obs, leaf_min_events)
                if valid.shape[0] == 0:
                    continue
                cands = sample_without_replacement(rng, valid, n_split)
                c, st = best_of(en, tn, sn, wn, cands)
                if st < split_min_stat:
                    continue
                # accept split
                split_done = True
                cut[cur] = c
                stat[cur] = st
                for a in range(mtry):
                    combo_cols[n_combo] = cols[a]
                    combo_coefs[n_combo] = coefs[a]
                    combo_pv[n_combo] = pv[a]
                    n_combo += 1
                nl = 0
                nr = 0
                for i in range(nn):
                    if en[i] <= c:
                        tmp_rows[nl] = rows[s0 + i]
                        nl += 1
                for i in range(nn):
                    if en[i] > c:
                        tmp_rows[nl + nr] = rows[s0 + i]
                        nr += 1
                for i in range(nn):
                    rows[s0 + i] = tmp_rows[i]
                lc = n_nodes
                rc = n_nodes + 1
                n_nodes += 2
                left[cur] = lc
                right[cur] = rc
                start[lc] = s0
                end[lc] = s0 + nl
                start[rc] = s0 + nl
                end[rc] = s1
                for child in (lc, rc):
                    depth[child] = depth[cur] + 1
                    cn = 0.0
                    ce = 0.0
                    for i in range(start[child], end[child]):
                        r = rows[i]
                        cn += w_all[r]
                        ce += w_all[r] * status[r]
                    n_obs[child] = cn
                    n_ev[child] = ce
                    pending[child] = cn >= split_min_obs and ce >= split_min_events
                break
        if not split_done:
            # leaf: weighted KM / Nelson-Aalen of the node's rows
            for i in range(nn):
                r = rows[s0 + i]
                tbuf[i] = time[r]
                sbuf[i] = status[r]
                wbuf[i] = w_all[r]
            lt, ls, lh = km_na(tbuf[:nn], sbuf[:nn], wbuf[:nn])
            leaf_len[cur] = lt.shape[0]
            for i in range(lt.shape[0]):
                leaf_times[n_leafv] = lt[i]
                leaf_surv[n_leafv] = ls[i]
                leaf_chf[n_leafv] = lh[i]
                n_leafv += 1
        cur += 1

    # combos and leaf curves were appended in node order
    cptr = np.zeros(n_nodes + 1, dtype=np.int64)
    lptr = np.zeros(n_nodes + 1, dtype=np.int64)
    for i in range(n_nodes):
        cptr[i + 1] = cptr[i] + (mtry if left[i] >= 0 else 0)
        lptr[i + 1] = lptr[i] + leaf_len[i]
    return (left[:n_nodes].copy(), right[:n_nodes].copy(), cut[:n_nodes].copy(),
            stat[:n_nodes].copy(), depth[:n_nodes].copy(), n_obs[:n_nodes].copy(),
            n_ev[:n_nodes].copy(), cptr, combo_cols[:n_combo].copy(),
            combo_coefs[:n_combo].copy(), combo_pv[:n_combo].copy(), lptr,
            leaf_times[:n_leafv].copy(), leaf_surv[:n_leafv].copy(),
            leaf_chf[:n_leafv].copy())


# --------------------------------------------------------------------------
# prediction


@njit(nogil=True, cache=True, error_model="numpy")
def step_value(times, values, t, before):
    """Right-continuous step function lookup; `before` returned left of times[0]."""
    lo = 0
    hi = times.shape[0]
    while lo < hi:
        mid = (lo + hi) // 2
        if times[mid] <= t:
            lo = mid + 1
        else:
            hi = mid
    if lo == 0:
        return before
    return values[lo - 1]


@njit(parallel=True, cache=True, error_model="numpy")
def route(X, tree_off, left, right, cut, cptr, ccols, ccoefs, mask, use_mask):
    """Global leaf node id per (row, tree); -1 where masked out."""
    q = X.shape[0]
    T = tree_off.shape[0] - 1
    out = np.full((q, T), -1, dtype=np.int64)
    # tree-major keeps one tree's nodes hot in cache
    for t in prange(T):
        root = tree_off[t]
        for i in range(q):
            if use_mask and mask[t, i] != 0:
                continue
            node = root
            while left[node] >= 0:
                acc = 0.0
                for k in range(cptr[node], cptr[node + 1]):
                    acc += ccoefs[k] * X[i, ccols[k]]
                if acc <= cut[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[i, t] = node
    return out


@njit(parallel=True, cache=True, error_model="numpy")
def leaf_mean_surv(leaves, lptr, ltimes, lsurv, horizons):
    q, T = leaves.shape
    h = horizons.shape[0]
    out = np.full((q, h), np.nan)
    counts = np.zeros(q, dtype=np.int64)
    for i in prange(q):
        acc = np.zeros(h)
        c = 0
        for t in range(T):
            node = leaves[i, t]
            if node < 0:
                continue
            c += 1
            a = lptr[node]
            b = lptr[node + 1]
            for j in range(h):
                acc[j] += step_value(ltimes[a:b], lsurv[a:b], horizons[j], 1.0)
        counts[i] = c
        if c > 0:
            for j in range(h):
                out[i, j] = acc[j] / c
    return out, counts


@njit(parallel=True, cache=True, error_model="numpy")
def leaf_mean_value(leaves, value):
    q, T = leaves.shape
    out = np.full(q, np.nan)
    for i in prange(q):
        acc = 0.0
        c = 0
        for t in range(T):
            node = leaves[i, t]
            if node >= 0:
                acc += value[node]
                c += 1
        if c > 0:
            out[i] = acc / c
    return out


@njit(cache=True, error_model="numpy")
def leaf_mortality(left, lptr, ltimes, lchf, grid):
    """Per-node sum of the leaf cumulative hazard over an event-time grid."""
    n = left.shape[0]
    out = np.zeros(n)
    for node in range(n):
        if left[node] >= 0:
            continue
        a = lptr[node]
        b = lptr[node + 1]
        acc = 0.0
        for t in grid:
            acc += step_value(ltimes[a:b], lchf[a:b], t, 0.0)
        out[node] = acc
    return out


# --------------------------------------------------------------------------
# concordance


@njit(cache=True, error_model="numpy")
def harrell_counts(time, status, risk):
    n = time.shape[0]
    num = 0.0
    den = 0.0
    for i in range(n):
        if status[i] == 0:
            continue
        for j in range(n):
            if j == i:
                continue
            usable = time[i] < time[j] or (time[i] == time[j] and status[j] == 0)
            if not usable:
                continue
            den += 1.0
            if risk[i] > risk[j]:
                num += 1.0
            elif risk[i] == risk[j]:
                num += 0.5
    return num, den
