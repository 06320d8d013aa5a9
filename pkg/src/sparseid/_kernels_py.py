"""Pure numpy implementations of the hot loops.

These mirror ``_kernels.pyx`` statement for statement and are used when the
compiled extension is unavailable (or ``SPARSEID_PURE_PYTHON=1`` is set).

Both kernels work on the Gram form of the problem

    minimise  w'Qw - 2c'w + 2 sum_j thr_j |w_j|

with ``Q`` symmetric positive semidefinite and ``thr >= 0``.  Coordinates
with ``thr_j == 0`` are unpenalised.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

STATUS_CONVERGED = 0
STATUS_MAX_ITER = 1
STATUS_NUMERICAL = 2

_STEP_FRACTION = 0.99


def _max_step(x: np.ndarray, dx: np.ndarray) -> float:
    neg = dx < 0
    if not np.any(neg):
        return 1.0
    return min(1.0, float(np.min(-x[neg] / dx[neg])))


def _factor(H: np.ndarray):
    try:
        return cho_factor(H, lower=True, check_finite=False)
    except LinAlgError:
        pass
    ridge = 1e-14 * max(1.0, float(np.max(np.abs(np.diag(H)))))
    eye = np.eye(H.shape[0])
    for _ in range(8):
        try:
            return cho_factor(H + ridge * eye, lower=True, check_finite=False)
        except LinAlgError:
            ridge *= 100.0
    return None


def ipm_l1(Q, c, thr, tol=1e-10, max_iter=200, offset=0.0):
    """Primal-dual interior-point solve of the weighted-l1 quadratic problem.

    The absolute values are split with auxiliary bounds ``-t <= w <= t`` and
    the Newton system is reduced to an ``N x N`` positive definite matrix
    ``2Q + diag(4 d1 d2 / (d1 + d2))``.  Mehrotra predictor-corrector steps.

    ``offset`` is the constant ``y'y`` (in the same units) so that the duality
    gap is measured relative to the full objective rather than to its
    variable part, which matters when the fit is nearly exact.

    Returns
    -------
    w : ndarray
    iterations : int
    status : int
        0 converged, 1 iteration limit, 2 numerical failure.
    """
    Q = np.ascontiguousarray(Q, dtype=float)
    c = np.ascontiguousarray(c, dtype=float)
    thr = np.ascontiguousarray(thr, dtype=float)
    n = c.size
    if n == 0:
        return np.zeros(0), 0, STATUS_CONVERGED
    bnd = (thr > 0).astype(float)
    w = np.zeros(n)
    t = np.ones(n)
    s1 = t - w
    s2 = t + w
    z1 = np.ones(n)
    z2 = np.ones(n)
    m = max(1.0, float(bnd.sum()) * 2.0)
    scale_d = 1.0 + max(float(np.max(np.abs(c))), float(np.max(thr)))
    status = STATUS_MAX_ITER
    it = 0
    for it in range(1, max_iter + 1):
        Qw = Q @ w
        rw = 2.0 * Qw - 2.0 * c + bnd * (z1 - z2)
        rt = bnd * (2.0 * thr - z1 - z2)
        r1 = bnd * (w - t + s1)
        r2 = bnd * (-w - t + s2)
        gap = float(bnd @ (s1 * z1 + s2 * z2))
        mu = gap / m
        pobj = float(w @ Qw - 2.0 * c @ w + 2.0 * thr @ np.abs(w))
        res_d = max(float(np.max(np.abs(rw))), float(np.max(np.abs(rt))))
        res_p = max(float(np.max(np.abs(r1))), float(np.max(np.abs(r2))))
        gap_ref = max(abs(offset + pobj), tol * (1.0 + abs(offset)))
        if res_d <= tol * scale_d and res_p <= tol * (1.0 + float(np.max(t))) and gap <= tol * gap_ref:
            status = STATUS_CONVERGED
            break
        d1 = bnd * z1 / s1
        d2 = bnd * z2 / s2
        ssum = d1 + d2
        ssum_safe = np.where(bnd > 0, ssum, 1.0)
        H = 2.0 * Q
        H[np.diag_indices(n)] += bnd * 4.0 * d1 * d2 / ssum_safe
        fac = _factor(H)
        if fac is None:
            status = STATUS_NUMERICAL
            break

        def solve(rc1, rc2):
            a1 = bnd * (-rc1 + z1 * r1) / s1
            a2 = bnd * (-rc2 + z2 * r2) / s2
            rhs = -rw - a1 + a2 + bnd * (d1 - d2) * (a1 + a2 - rt) / ssum_safe
            dw = cho_solve(fac, rhs, check_finite=False)
            dt = bnd * (a1 + a2 - rt + (d1 - d2) * dw) / ssum_safe
            ds1 = bnd * (-r1 - dw + dt)
            ds2 = bnd * (-r2 + dw + dt)
            dz1 = a1 + d1 * dw - d1 * dt
            dz2 = a2 - d2 * dw - d2 * dt
            return dw, dt, ds1, ds2, dz1, dz2

        dw, dt, ds1, ds2, dz1, dz2 = solve(bnd * s1 * z1, bnd * s2 * z2)
        alpha = min(_max_step(s1, ds1), _max_step(s2, ds2), _max_step(z1, dz1), _max_step(z2, dz2))
        mu_aff = float(bnd @ ((s1 + alpha * ds1) * (z1 + alpha * dz1) + (s2 + alpha * ds2) * (z2 + alpha * dz2))) / m
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
        rc1 = bnd * (s1 * z1 + ds1 * dz1 - sigma * mu)
        rc2 = bnd * (s2 * z2 + ds2 * dz2 - sigma * mu)
        dw, dt, ds1, ds2, dz1, dz2 = solve(rc1, rc2)
        alpha = min(_max_step(s1, ds1), _max_step(s2, ds2), _max_step(z1, dz1), _max_step(z2, dz2))
        alpha = min(1.0, _STEP_FRACTION * alpha)
        w = w + alpha * dw
        t = t + alpha * dt
        s1 = np.where(bnd > 0, s1 + alpha * ds1, 1.0)
        s2 = np.where(bnd > 0, s2 + alpha * ds2, 1.0)
        z1 = np.where(bnd > 0, z1 + alpha * dz1, 1.0)
        z2 = np.where(bnd > 0, z2 + alpha * dz2, 1.0)
    return w, it, status


def fista_l1(Q, c, thr, step, tol=1e-12, max_iter=100000, accelerate=True):
    """Proximal-gradient iterations on the Gram form.

    ``step`` must be ``1 / L`` with ``L`` the Lipschitz constant of the
    smooth part's gradient, i.e. ``2 * lambda_max(Q)``.  With ``accelerate``
    the FISTA momentum is used with gradient-based adaptive restart.

    Returns ``(w, iterations, status)`` with status 0 when the prox-gradient
    mapping falls below ``tol * (1 + 2*max|c|)``, else 1.
    """
    Q = np.ascontiguousarray(Q, dtype=float)
    c = np.ascontiguousarray(c, dtype=float)
    thr = np.ascontiguousarray(thr, dtype=float)
    n = c.size
    w = np.zeros(n)
    v = w.copy()
    tk = 1.0
    kappa = 2.0 * step * thr
    scale = 1.0 + 2.0 * float(np.max(np.abs(c))) if n else 1.0
    status = STATUS_MAX_ITER
    it = 0
    for it in range(1, max_iter + 1):
        g = 2.0 * (Q @ v) - 2.0 * c
        z = v - step * g
        w_new = np.sign(z) * np.maximum(np.abs(z) - kappa, 0.0)
        diff = w_new - v
        if float(np.max(np.abs(diff), initial=0.0)) / step <= tol * scale:
            w = w_new
            status = STATUS_CONVERGED
            break
        if accelerate:
            if float(diff @ (w_new - w)) < 0.0:
                tk = 1.0
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
            v = w_new + ((tk - 1.0) / t_new) * (w_new - w)
            tk = t_new
        else:
            v = w_new
        w = w_new
    return w, it, status
