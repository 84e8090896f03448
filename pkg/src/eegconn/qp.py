"""Interior-point solver for the linear-kernel SVM dual.

Solves

    min_a  0.5 a'Qa - e'a   s.t.  y'a = 0,  0 <= a <= c,   Q = Z Z'

with ``Z = diag(y) X`` of shape ``[n, d]``. Each Newton system
``(Q + D) da + y db = r`` is solved through the Woodbury identity, so a step
costs O(n d^2) instead of O(n^3) and the iteration count barely depends on
conditioning. Used to warm-start SMO, which then certifies the KKT
tolerance.
"""

import numpy as np
from scipy.linalg import cho_factor, cho_solve

_STEP = 0.995
_D_FLOOR = 1e-8


def _max_step(v, dv):
    neg = dv < 0
    if not neg.any():
        return 1.0
    return min(1.0, float(np.min(-v[neg] / dv[neg])))


def ipm_dual(Z, y, c, gap_tol=1e-9, max_iter=100):
    """Mehrotra predictor-corrector on the box-constrained SVM dual.

    Returns ``(alpha, b, n_iter, converged)`` where ``b`` is the multiplier
    of the equality constraint (the decision bias).
    """
    Z = np.asarray(Z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    n, d = Z.shape
    alpha = 0.5 * c
    # equality-feasible start: rescale each class's share so that y'a = 0
    pos, neg = y > 0, y < 0
    sp, sn = alpha[pos].sum(), alpha[neg].sum()
    if sp > sn:
        alpha[pos] *= sn / sp
    else:
        alpha[neg] *= sp / sn
    s = c - alpha
    lam = np.ones(n)
    mu = np.ones(n)
    b = 0.0
    scale = max(1.0, float(np.abs(c).max()))
    eye = np.eye(d)

    def qmul(v):
        return Z @ (Z.T @ v)

    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        qa = qmul(alpha)
        r_d = qa - 1.0 + b * y - lam + mu
        r_p = float(y @ alpha)
        gap = (lam @ alpha + mu @ s) / (2 * n)
        res_tol = 1e-9 * (1.0 + float(np.abs(qa).max()))
        if gap < gap_tol * scale and np.abs(r_d).max() < res_tol and abs(r_p) < 1e-9 * scale * n:
            converged = True
            break

        # Flooring D bounds the Woodbury inner matrix's conditioning; it acts
        # as a small proximal term and only costs accuracy SMO recovers.
        D = np.maximum(lam / alpha + mu / s, _D_FLOOR)
        Dinv = 1.0 / D
        try:
            inner = cho_factor(eye + Z.T @ (Dinv[:, None] * Z))
        except np.linalg.LinAlgError:
            break

        def msolve(v):
            w = Dinv * v
            return w - Dinv * (Z @ cho_solve(inner, Z.T @ w))

        My = msolve(y)
        yMy = float(y @ My)

        def direction(r_lam, r_mu):
            r = -r_d + r_lam / alpha - r_mu / s
            Mr = msolve(r)
            db = (float(y @ Mr) + r_p) / yMy
            da = Mr - db * My
            dlam = (r_lam - lam * da) / alpha
            dmu = (r_mu + mu * da) / s
            return da, db, dlam, dmu

        # predictor
        da, db, dlam, dmu = direction(-lam * alpha, -mu * s)
        ds = -da
        tp = min(_max_step(alpha, da), _max_step(s, ds))
        td = min(_max_step(lam, dlam), _max_step(mu, dmu))
        gap_aff = ((lam + td * dlam) @ (alpha + tp * da) + (mu + td * dmu) @ (s + tp * ds)) / (2 * n)
        sigma = (gap_aff / gap) ** 3
        tau = sigma * gap
        # corrector
        da, db, dlam, dmu = direction(tau - lam * alpha - da * dlam, tau - mu * s - ds * dmu)
        ds = -da
        tp = _STEP * min(_max_step(alpha, da), _max_step(s, ds))
        td = _STEP * min(_max_step(lam, dlam), _max_step(mu, dmu))
        alpha = alpha + tp * da
        lam = lam + td * dlam
        mu = mu + td * dmu
        b = b + td * db
        s = np.maximum(c - alpha, 1e-300)
    return alpha, b, it, converged


def snap_feasible(alpha, y, c, rel=1e-7):
    """Round near-bound values onto the bounds and restore y'a = 0.

    The equality residual is absorbed by free variables first and by
    bounded ones only if the free ones lack room.
    """
    c = np.asarray(c, dtype=np.float64)
    a = np.clip(np.asarray(alpha, dtype=np.float64), 0.0, c)
    a[a < rel * c] = 0.0
    top = a > (1.0 - rel) * c
    a[top] = c[top]
    for pool in ("free", "all"):
        r = float(y @ a)
        if r == 0.0:
            break
        # r > 0: lower a where y > 0, raise it where y < 0 (and vice versa)
        room = np.where(y * np.sign(r) > 0, a, c - a)
        if pool == "free":
            room = np.where((a > 0.0) & (a < c), room, 0.0)
        total = room.sum()
        if total <= 0.0:
            continue
        share = min(1.0, abs(r) / total)
        a = np.clip(a - np.sign(r) * y * share * room, 0.0, c)
    return a
