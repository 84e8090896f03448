"""Hot numeric kernels.

Every kernel exists twice: a loop-level ``*_numba`` version compiled with
``@njit`` and a vectorised ``*_numpy`` version. The public name (no suffix)
points at whichever backend :mod:`eegconn._accel` selected at import time.
Both versions take already-validated inputs; callers in :mod:`features` and
:mod:`classify` do the checking and attach context to errors.

Pair ordering everywhere is the row-major strict upper triangle:
(0, 1), (0, 2), ..., (0, n-1), (1, 2), ...
"""

import numpy as np

from ._accel import USE_NUMBA, njit


def upper_pairs(n):
    """Row-major strict-upper-triangle index arrays for an ``n x n`` matrix."""
    return np.triu_indices(n, k=1)


# ---------------------------------------------------------------------------
# Pearson correlation, all channel pairs of every window
# ---------------------------------------------------------------------------

@njit
def pearson_upper_numba(windows):
    n_win, n_ch, n = windows.shape
    n_pairs = n_ch * (n_ch - 1) // 2
    out = np.empty((n_win, n_pairs))
    z = np.empty((n_ch, n))
    for w in range(n_win):
        for c in range(n_ch):
            mu = 0.0
            for t in range(n):
                mu += windows[w, c, t]
            mu /= n
            ss = 0.0
            for t in range(n):
                d = windows[w, c, t] - mu
                z[c, t] = d
                ss += d * d
            sd = np.sqrt(ss / n)
            for t in range(n):
                z[c, t] /= sd
        p = 0
        for i in range(n_ch):
            for j in range(i + 1, n_ch):
                acc = 0.0
                for t in range(n):
                    acc += z[i, t] * z[j, t]
                r = acc / n
                if r > 1.0:
                    r = 1.0
                elif r < -1.0:
                    r = -1.0
                out[w, p] = r
                p += 1
    return out


def pearson_upper_numpy(windows):
    n = windows.shape[-1]
    centred = windows - windows.mean(axis=-1, keepdims=True)
    sd = np.sqrt((centred * centred).sum(axis=-1, keepdims=True) / n)
    z = centred / sd
    corr = np.einsum("wct,wdt->wcd", z, z) / n
    iu, ju = upper_pairs(windows.shape[1])
    return np.clip(corr[:, iu, ju], -1.0, 1.0)


# ---------------------------------------------------------------------------
# Band-averaged magnitude coherence from Welch segment spectra
# ---------------------------------------------------------------------------

@njit
def coherence_upper_numba(spectra):
    # spectra: complex [n_win, n_ch, n_seg, n_freq], in-band bins only
    n_win, n_ch, n_seg, n_freq = spectra.shape
    n_pairs = n_ch * (n_ch - 1) // 2
    out = np.empty((n_win, n_pairs))
    auto = np.empty((n_ch, n_freq))
    for w in range(n_win):
        for c in range(n_ch):
            for f in range(n_freq):
                acc = 0.0
                for s in range(n_seg):
                    v = spectra[w, c, s, f]
                    acc += v.real * v.real + v.imag * v.imag
                auto[c, f] = acc
        p = 0
        for i in range(n_ch):
            for j in range(i + 1, n_ch):
                total = 0.0
                for f in range(n_freq):
                    re = 0.0
                    im = 0.0
                    for s in range(n_seg):
                        a = spectra[w, i, s, f]
                        b = spectra[w, j, s, f]
                        # conj(a) * b
                        re += a.real * b.real + a.imag * b.imag
                        im += a.real * b.imag - a.imag * b.real
                    coh = np.sqrt(re * re + im * im) / np.sqrt(auto[i, f] * auto[j, f])
                    if coh > 1.0:
                        coh = 1.0
                    total += coh
                out[w, p] = total / n_freq
                p += 1
    return out


def coherence_upper_numpy(spectra):
    cross = np.einsum("wisf,wjsf->wijf", spectra.conj(), spectra)
    auto = np.einsum("wisf,wisf->wif", spectra.conj(), spectra).real
    iu, ju = upper_pairs(spectra.shape[1])
    num = np.abs(cross[:, iu, ju, :])
    den = np.sqrt(auto[:, iu, :] * auto[:, ju, :])
    coh = np.minimum(num / den, 1.0)
    return coh.mean(axis=-1)


# ---------------------------------------------------------------------------
# Phase-locking value from unit phasors
# ---------------------------------------------------------------------------

@njit
def plv_upper_numba(phasors):
    n_win, n_ch, n = phasors.shape
    n_pairs = n_ch * (n_ch - 1) // 2
    out = np.empty((n_win, n_pairs))
    for w in range(n_win):
        p = 0
        for i in range(n_ch):
            for j in range(i + 1, n_ch):
                re = 0.0
                im = 0.0
                for t in range(n):
                    a = phasors[w, i, t]
                    b = phasors[w, j, t]
                    # a * conj(b)
                    re += a.real * b.real + a.imag * b.imag
                    im += a.imag * b.real - a.real * b.imag
                v = np.sqrt(re * re + im * im) / n
                if v > 1.0:
                    v = 1.0
                out[w, p] = v
                p += 1
    return out


def plv_upper_numpy(phasors):
    n = phasors.shape[-1]
    lock = np.abs(phasors @ np.conj(np.swapaxes(phasors, 1, 2))) / n
    iu, ju = upper_pairs(phasors.shape[1])
    return np.minimum(lock[:, iu, ju], 1.0)


# ---------------------------------------------------------------------------
# SMO solver for the binary soft-margin SVM dual on a precomputed Gram matrix
#
#   min_a  0.5 a'Qa - e'a   s.t.  0 <= a_i <= c_i,  y'a = 0,  Q_ij = y_i y_j K_ij
#
# Working-set selection uses second-order information, with LIBSVM-style
# shrinking of bounded variables; the stopping rule is the maximal KKT
# violation m(a) - M(a) < tol on the full (unshrunk) problem. The dual
# objective is updated incrementally and logged once per n pair updates.
# ---------------------------------------------------------------------------

_TAU = 1e-12
_SHRINK_EVERY = 1000


@njit
def _select_numba(K, y, c, alpha, grad, act, n_act):
    gmax = -np.inf
    i = -1
    for s in range(n_act):
        t = act[s]
        if y[t] > 0:
            if alpha[t] < c[t] and -grad[t] > gmax:
                gmax = -grad[t]
                i = t
        else:
            if alpha[t] > 0.0 and grad[t] > gmax:
                gmax = grad[t]
                i = t
    gmax2 = -np.inf
    j = -1
    obj_min = np.inf
    for s in range(n_act):
        t = act[s]
        if y[t] > 0:
            if not alpha[t] > 0.0:
                continue
            v = grad[t]
            diff = gmax + grad[t]
        else:
            if not alpha[t] < c[t]:
                continue
            v = -grad[t]
            diff = gmax - grad[t]
        if v > gmax2:
            gmax2 = v
        if diff > 0.0 and i >= 0:
            quad = K[i, i] + K[t, t] - 2.0 * K[i, t]
            if quad <= 0.0:
                quad = _TAU
            o = -(diff * diff) / quad
            if o < obj_min:
                obj_min = o
                j = t
    return i, j, gmax, gmax2


@njit
def _reconstruct_numba(K, y, alpha, grad, active):
    n = y.shape[0]
    for t in range(n):
        if active[t]:
            continue
        acc = 0.0
        for s in range(n):
            if alpha[s] > 0.0:
                acc += K[t, s] * y[s] * alpha[s]
        grad[t] = y[t] * acc - 1.0


@njit
def _be_shrunk(t, y, c, alpha, grad, gmax1, gmax2):
    if alpha[t] >= c[t]:
        if y[t] > 0:
            return -grad[t] > gmax1
        return -grad[t] > gmax2
    if alpha[t] <= 0.0:
        if y[t] > 0:
            return grad[t] > gmax2
        return grad[t] > gmax1
    return False


@njit
def smo_numba(K, y, c, tol, max_iter, trace, alpha, grad, obj):
    """Run from the feasible start ``alpha`` (updated in place) whose
    gradient Qa - e is ``grad`` and objective ``obj``."""
    n = y.shape[0]
    active = np.ones(n, dtype=np.bool_)
    act = np.arange(n)
    n_act = n
    unshrunk = False
    counter = min(n, _SHRINK_EVERY)
    n_trace = 0
    it = 0
    converged = False
    while it < max_iter:
        if it % n == 0 and n_trace < trace.shape[0]:
            trace[n_trace] = obj
            n_trace += 1

        counter -= 1
        if counter == 0:
            counter = min(n, _SHRINK_EVERY)
            _, _, gmax1, gmax2 = _select_numba(K, y, c, alpha, grad, act, n_act)
            if not unshrunk and gmax1 + gmax2 <= 10.0 * tol:
                unshrunk = True
                _reconstruct_numba(K, y, alpha, grad, active)
                active[:] = True
            n_act = 0
            for t in range(n):
                if active[t] and _be_shrunk(t, y, c, alpha, grad, gmax1, gmax2):
                    active[t] = False
                if active[t]:
                    act[n_act] = t
                    n_act += 1

        i, j, gmax, gmax2 = _select_numba(K, y, c, alpha, grad, act, n_act)
        if gmax + gmax2 < tol or i < 0 or j < 0:
            if n_act < n:
                _reconstruct_numba(K, y, alpha, grad, active)
                active[:] = True
                for t in range(n):
                    act[t] = t
                n_act = n
                i, j, gmax, gmax2 = _select_numba(K, y, c, alpha, grad, act, n_act)
            if gmax + gmax2 < tol or i < 0 or j < 0:
                converged = True
                break
            counter = 1

        ci = c[i]
        cj = c[j]
        old_ai = alpha[i]
        old_aj = alpha[j]
        ai = old_ai
        aj = old_aj
        quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if quad <= 0.0:
            quad = _TAU
        if y[i] != y[j]:
            delta = (-grad[i] - grad[j]) / quad
            diff = ai - aj
            ai += delta
            aj += delta
            if diff > 0.0:
                if aj < 0.0:
                    aj = 0.0
                    ai = diff
            else:
                if ai < 0.0:
                    ai = 0.0
                    aj = -diff
            if diff > ci - cj:
                if ai > ci:
                    ai = ci
                    aj = ci - diff
            else:
                if aj > cj:
                    aj = cj
                    ai = cj + diff
        else:
            delta = (grad[i] - grad[j]) / quad
            total = ai + aj
            ai -= delta
            aj += delta
            if total > ci:
                if ai > ci:
                    ai = ci
                    aj = total - ci
            else:
                if aj < 0.0:
                    aj = 0.0
                    ai = total
            if total > cj:
                if aj > cj:
                    aj = cj
                    ai = total - cj
            else:
                if ai < 0.0:
                    ai = 0.0
                    aj = total
        di = ai - old_ai
        dj = aj - old_aj
        obj += grad[i] * di + grad[j] * dj + 0.5 * (
            K[i, i] * di * di + K[j, j] * dj * dj + 2.0 * y[i] * y[j] * K[i, j] * di * dj
        )
        alpha[i] = ai
        alpha[j] = aj
        dai = di * y[i]
        daj = dj * y[j]
        for s in range(n_act):
            t = act[s]
            grad[t] += y[t] * (K[i, t] * dai + K[j, t] * daj)
        it += 1

    rho = _smo_rho(alpha, grad, y, c)
    return alpha, rho, it, converged, n_trace


@njit
def _smo_rho(alpha, grad, y, c):
    n = y.shape[0]
    ub = np.inf
    lb = -np.inf
    n_free = 0
    sum_free = 0.0
    for t in range(n):
        yg = y[t] * grad[t]
        if alpha[t] >= c[t]:
            if y[t] < 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        elif alpha[t] <= 0.0:
            if y[t] > 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        else:
            n_free += 1
            sum_free += yg
    if n_free > 0:
        return sum_free / n_free
    return 0.5 * (ub + lb)


def _select_numpy(K, y, c, alpha, grad, act):
    ya, aa, ga, ca = y[act], alpha[act], grad[act], c[act]
    pos = ya > 0
    up = np.where(pos, aa < ca, aa > 0.0)
    low = np.where(pos, aa > 0.0, aa < ca)
    viol = -ya * ga
    cand = np.where(up, viol, -np.inf)
    if not up.any():
        return -1, -1, -np.inf, float(np.max(np.where(low, -viol, -np.inf), initial=-np.inf))
    s_i = int(np.argmax(cand))
    i = int(act[s_i])
    gmax = float(cand[s_i])
    gmax2 = float(np.max(np.where(low, -viol, -np.inf), initial=-np.inf))
    diff = gmax - viol
    quad = K[i, i] + np.diagonal(K)[act] - 2.0 * K[i, act]
    quad = np.where(quad <= 0.0, _TAU, quad)
    score = np.where(low & (diff > 0.0), -(diff * diff) / quad, np.inf)
    s_j = int(np.argmin(score))
    j = int(act[s_j]) if np.isfinite(score[s_j]) else -1
    return i, j, gmax, gmax2


def _reconstruct_numpy(K, y, alpha, grad, active):
    idle = ~active
    if idle.any():
        sv = alpha > 0.0
        grad[idle] = y[idle] * (K[np.ix_(idle, sv)] @ (y[sv] * alpha[sv])) - 1.0


def _be_shrunk_numpy(y, c, alpha, grad, gmax1, gmax2):
    upper = alpha >= c
    lower = alpha <= 0.0
    pos = y > 0
    return (
        (upper & pos & (-grad > gmax1)) | (upper & ~pos & (-grad > gmax2))
        | (~upper & lower & pos & (grad > gmax2)) | (~upper & lower & ~pos & (grad > gmax1))
    )


def smo_numpy(K, y, c, tol, max_iter, trace, alpha, grad, obj):
    """Run from the feasible start ``alpha`` (updated in place) whose
    gradient Qa - e is ``grad`` and objective ``obj``."""
    n = y.shape[0]
    active = np.ones(n, dtype=bool)
    act = np.arange(n)
    unshrunk = False
    counter = min(n, _SHRINK_EVERY)
    n_trace = 0
    it = 0
    converged = False
    while it < max_iter:
        if it % n == 0 and n_trace < trace.shape[0]:
            trace[n_trace] = obj
            n_trace += 1

        counter -= 1
        if counter == 0:
            counter = min(n, _SHRINK_EVERY)
            _, _, gmax1, gmax2 = _select_numpy(K, y, c, alpha, grad, act)
            if not unshrunk and gmax1 + gmax2 <= 10.0 * tol:
                unshrunk = True
                _reconstruct_numpy(K, y, alpha, grad, active)
                active[:] = True
            active &= ~_be_shrunk_numpy(y, c, alpha, grad, gmax1, gmax2)
            act = np.flatnonzero(active)

        i, j, gmax, gmax2 = _select_numpy(K, y, c, alpha, grad, act)
        if gmax + gmax2 < tol or i < 0 or j < 0:
            if act.size < n:
                _reconstruct_numpy(K, y, alpha, grad, active)
                active[:] = True
                act = np.arange(n)
                i, j, gmax, gmax2 = _select_numpy(K, y, c, alpha, grad, act)
            if gmax + gmax2 < tol or i < 0 or j < 0:
                converged = True
                break
            counter = 1

        ci, cj = c[i], c[j]
        old_ai, old_aj = alpha[i], alpha[j]
        ai, aj = old_ai, old_aj
        quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
        quad = quad if quad > 0.0 else _TAU
        if y[i] != y[j]:
            delta = (-grad[i] - grad[j]) / quad
            d = ai - aj
            ai += delta
            aj += delta
            if d > 0.0:
                if aj < 0.0:
                    aj, ai = 0.0, d
            elif ai < 0.0:
                ai, aj = 0.0, -d
            if d > ci - cj:
                if ai > ci:
                    ai, aj = ci, ci - d
            elif aj > cj:
                aj, ai = cj, cj + d
        else:
            delta = (grad[i] - grad[j]) / quad
            total = ai + aj
            ai -= delta
            aj += delta
            if total > ci:
                if ai > ci:
                    ai, aj = ci, total - ci
            elif aj < 0.0:
                aj, ai = 0.0, total
            if total > cj:
                if aj > cj:
                    aj, ai = cj, total - cj
            elif ai < 0.0:
                ai, aj = 0.0, total
        di, dj = ai - old_ai, aj - old_aj
        obj += grad[i] * di + grad[j] * dj + 0.5 * (
            K[i, i] * di * di + K[j, j] * dj * dj + 2.0 * y[i] * y[j] * K[i, j] * di * dj
        )
        alpha[i], alpha[j] = ai, aj
        grad[act] += y[act] * (K[i, act] * (di * y[i]) + K[j, act] * (dj * y[j]))
        it += 1

    rho = _smo_rho_numpy(alpha, grad, y, c)
    return alpha, rho, it, converged, n_trace


def _smo_rho_numpy(alpha, grad, y, c):
    yg = y * grad
    at_upper = alpha >= c
    at_lower = alpha <= 0.0
    free = ~(at_upper | at_lower)
    if free.any():
        return float(yg[free].mean())
    ub_mask = (at_upper & (y < 0)) | (~at_upper & at_lower & (y > 0))
    lb_mask = (at_upper & (y > 0)) | (~at_upper & at_lower & (y < 0))
    ub = yg[ub_mask].min() if ub_mask.any() else np.inf
    lb = yg[lb_mask].max() if lb_mask.any() else -np.inf
    return 0.5 * (ub + lb)


if USE_NUMBA:
    pearson_upper = pearson_upper_numba
    coherence_upper = coherence_upper_numba
    plv_upper = plv_upper_numba
    smo = smo_numba
else:
    pearson_upper = pearson_upper_numpy
    coherence_upper = coherence_upper_numpy
    plv_upper = plv_upper_numpy
    smo = smo_numpy
