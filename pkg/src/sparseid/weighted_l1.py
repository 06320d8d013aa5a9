"""Weighted l1-regularised least squares with optional linear constraints.

Solves

    minimise  ||y - phi w||^2 + 2 lam sum_j u_j |w_j|
    subject to  A w = b,  G w <= h

with a primal-dual interior-point method on the Gram matrix, followed by an
active-set polish that snaps the solution onto its support so that zero
coefficients are exactly zero.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from . import kernels

STATUSES = ("converged", "max_iter", "infeasible")

_POLISH_THRESHOLDS = (1e-10, 1e-8, 1e-6, 1e-4)
_POLISH_GAP_CUTS = 3


@dataclass(frozen=True)
class LinearConstraints:
    """``A w = b`` and ``G w <= h``; either block may be empty."""

    eq_matrix: np.ndarray | None = None
    eq_rhs: np.ndarray | None = None
    ineq_matrix: np.ndarray | None = None
    ineq_rhs: np.ndarray | None = None

    def __post_init__(self):
        for mat_name, rhs_name in (("eq_matrix", "eq_rhs"), ("ineq_matrix", "ineq_rhs")):
            mat = getattr(self, mat_name)
            rhs = getattr(self, rhs_name)
            if mat is None and rhs is None:
                continue
            if mat is None or rhs is None:
                raise ValueError(f"{mat_name} and {rhs_name} must be given together")
            mat = np.atleast_2d(np.asarray(mat, dtype=float))
            rhs = np.asarray(rhs, dtype=float).reshape(-1)
            if mat.shape[0] != rhs.size:
                raise ValueError(f"{rhs_name} length {rhs.size} does not match {mat.shape[0]} rows")
            if not (np.all(np.isfinite(mat)) and np.all(np.isfinite(rhs))):
                raise ValueError("constraint data must be finite")
            if mat.shape[0] == 0:
                mat, rhs = None, None
            object.__setattr__(self, mat_name, mat)
            object.__setattr__(self, rhs_name, rhs)

    @property
    def is_empty(self) -> bool:
        return self.eq_matrix is None and self.ineq_matrix is None

    @property
    def n_eq(self) -> int:
        return 0 if self.eq_matrix is None else self.eq_matrix.shape[0]

    @property
    def n_ineq(self) -> int:
        return 0 if self.ineq_matrix is None else self.ineq_matrix.shape[0]

    def check_columns(self, n: int) -> None:
        for mat in (self.eq_matrix, self.ineq_matrix):
            if mat is not None and mat.shape[1] != n:
                raise ValueError(f"constraint matrix has {mat.shape[1]} columns, expected {n}")

    def restrict(self, columns: np.ndarray) -> "LinearConstraints":
        """Constraints on the sub-vector ``w[columns]`` with the rest fixed at 0."""
        cols = np.asarray(columns, dtype=np.int64)
        return LinearConstraints(
            None if self.eq_matrix is None else self.eq_matrix[:, cols],
            self.eq_rhs,
            None if self.ineq_matrix is None else self.ineq_matrix[:, cols],
            self.ineq_rhs,
        )

    def violation(self, w: np.ndarray) -> tuple[float, float]:
        """Largest equality residual and largest inequality excess."""
        eq = 0.0 if self.eq_matrix is None else float(np.max(np.abs(self.eq_matrix @ w - self.eq_rhs)))
        ineq = 0.0 if self.ineq_matrix is None else float(np.max(self.ineq_matrix @ w - self.ineq_rhs, initial=0.0))
        return eq, max(ineq, 0.0)

    @classmethod
    def bounds(cls, n: int, nonnegative=(), nonpositive=(), fixed: dict | None = None) -> "LinearConstraints":
        """Sign constraints on selected coordinates and fixed values on others."""
        g_rows, h = [], []
        for j in nonnegative:
            row = np.zeros(n)
            row[j] = -1.0
            g_rows.append(row)
            h.append(0.0)
        for j in nonpositive:
            row = np.zeros(n)
            row[j] = 1.0
            g_rows.append(row)
            h.append(0.0)
        a_rows, b = [], []
        for j, val in (fixed or {}).items():
            row = np.zeros(n)
            row[int(j)] = 1.0
            a_rows.append(row)
            b.append(float(val))
        return cls(
            np.array(a_rows) if a_rows else None,
            np.array(b) if a_rows else None,
            np.array(g_rows) if g_rows else None,
            np.array(h) if g_rows else None,
        )


@dataclass
class L1Solution:
    """Result of :func:`solve_weighted_l1`.

    ``objective`` is ``||y - phi w||^2 + 2 lam sum u_j |w_j|`` and is NaN when
    the status is ``infeasible``.
    """

    w: np.ndarray
    objective: float
    status: str
    iterations: int = 0
    info: dict = field(default_factory=dict)


def weighted_l1_objective(phi, y, u, lam, w) -> float:
    r = np.asarray(y) - np.asarray(phi) @ w
    return float(r @ r + 2.0 * lam * np.sum(np.asarray(u) * np.abs(w)))


def kkt_residual(phi, y, u, lam, w, zero_tol: float = 0.0) -> float:
    """Largest violation of the unconstrained optimality conditions.

    For ``w_j != 0`` the violation is ``|g_j + 2 lam u_j sign(w_j)|`` and for
    ``w_j == 0`` it is ``max(|g_j| - 2 lam u_j, 0)`` with
    ``g = 2 phi'(phi w - y)``.
    """
    phi = np.asarray(phi, dtype=float)
    u = np.asarray(u, dtype=float)
    g = 2.0 * phi.T @ (phi @ w - y)
    nz = np.abs(w) > zero_tol
    v_nz = np.abs(g[nz] + 2.0 * lam * u[nz] * np.sign(w[nz]))
    v_z = np.maximum(np.abs(g[~nz]) - 2.0 * lam * u[~nz], 0.0)
    return float(max(np.max(v_nz, initial=0.0), np.max(v_z, initial=0.0)))


def _gram_objective(Q, c, yy, thr, w) -> float:
    return float(yy - 2.0 * c @ w + w @ Q @ w + 2.0 * thr @ np.abs(w))


def _is_feasible(constraints: LinearConstraints, n: int) -> bool:
    if constraints.is_empty:
        return True
    if n == 0:
        eq_ok = constraints.eq_rhs is None or bool(np.all(np.abs(constraints.eq_rhs) <= 1e-12))
        in_ok = constraints.ineq_rhs is None or bool(np.all(constraints.ineq_rhs >= -1e-12))
        return eq_ok and in_ok
    res = linprog(
        np.zeros(n),
        A_ub=constraints.ineq_matrix,
        b_ub=constraints.ineq_rhs,
        A_eq=constraints.eq_matrix,
        b_eq=constraints.eq_rhs,
        bounds=[(None, None)] * n,
        method="highs",
    )
    return res.status != 2


def _ipm_constrained(Q, c, thr, A, b, G, h, tol, max_iter, offset=0.0):
    """Interior-point method with equality and inequality rows (numpy only).

    Same splitting as the unconstrained kernel; equality multipliers enter a
    symmetric indefinite KKT system solved densely.
    """
    n = c.size
    p = 0 if A is None else A.shape[0]
    q = 0 if G is None else G.shape[0]
    A = np.zeros((0, n)) if A is None else A
    b = np.zeros(0) if b is None else b
    G = np.zeros((0, n)) if G is None else G
    h = np.zeros(0) if h is None else h
    bnd = (thr > 0).astype(float)
    w = np.zeros(n)
    t = np.ones(n)
    s1, s2 = t - w, t + w
    z1, z2 = np.ones(n), np.ones(n)
    nu = np.zeros(p)
    s3 = np.maximum(h - G @ w, 1.0)
    z3 = np.ones(q)
    m = max(1.0, 2.0 * float(bnd.sum()) + q)
    scale_d = 1.0 + max(float(np.max(np.abs(c))), float(np.max(thr)))
    scale_p = 1.0 + max(float(np.max(np.abs(b), initial=0.0)), float(np.max(np.abs(h), initial=0.0)))
    status = kernels.STATUS_MAX_ITER
    it = 0

    def max_step(x, dx):
        neg = dx < 0
        return 1.0 if not np.any(neg) else min(1.0, float(np.min(-x[neg] / dx[neg])))

    for it in range(1, max_iter + 1):
        Qw = Q @ w
        rw = 2.0 * Qw - 2.0 * c + bnd * (z1 - z2) + A.T @ nu + G.T @ z3
        rt = bnd * (2.0 * thr - z1 - z2)
        r1 = bnd * (w - t + s1)
        r2 = bnd * (-w - t + s2)
        re = A @ w - b
        ri = G @ w + s3 - h
        gap = float(bnd @ (s1 * z1 + s2 * z2) + s3 @ z3)
        mu = gap / m
        pobj = float(w @ Qw - 2.0 * c @ w + 2.0 * thr @ np.abs(w))
        res_d = max(float(np.max(np.abs(rw))), float(np.max(np.abs(rt))))
        res_p = max(
            float(np.max(np.abs(r1))),
            float(np.max(np.abs(r2))),
            float(np.max(np.abs(re), initial=0.0)),
            float(np.max(np.abs(ri), initial=0.0)),
        )
        gap_ref = max(abs(offset + pobj), tol * (1.0 + abs(offset)))
        if res_d <= tol * scale_d and res_p <= tol * scale_p and gap <= tol * gap_ref:
            status = kernels.STATUS_CONVERGED
            break
        d1 = bnd * z1 / s1
        d2 = bnd * z2 / s2
        ssum = np.where(bnd > 0, d1 + d2, 1.0)
        d3 = z3 / s3
        H = 2.0 * Q + G.T @ (d3[:, None] * G)
        H[np.diag_indices(n)] += bnd * 4.0 * d1 * d2 / ssum
        K = np.zeros((n + p, n + p))
        K[:n, :n] = H
        K[:n, n:] = A.T
        K[n:, :n] = A
        K[n:, n:] -= 1e-14 * max(1.0, float(np.max(np.abs(np.diag(H)))))

        def solve(rc1, rc2, rc3):
            a1 = bnd * (-rc1 + z1 * r1) / s1
            a2 = bnd * (-rc2 + z2 * r2) / s2
            a3 = (-rc3 + z3 * ri) / s3
            rhs = np.concatenate([-rw - a1 + a2 + bnd * (d1 - d2) * (a1 + a2 - rt) / ssum - G.T @ a3, -re])
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
            dw, dnu = sol[:n], sol[n:]
            dt = bnd * (a1 + a2 - rt + (d1 - d2) * dw) / ssum
            ds1 = bnd * (-r1 - dw + dt)
            ds2 = bnd * (-r2 + dw + dt)
            dz1 = a1 + d1 * dw - d1 * dt
            dz2 = a2 - d2 * dw - d2 * dt
            ds3 = -ri - G @ dw
            dz3 = a3 + d3 * (G @ dw)
            return dw, dt, dnu, ds1, ds2, ds3, dz1, dz2, dz3

        def step(d):
            _, _, _, ds1, ds2, ds3, dz1, dz2, dz3 = d
            return min(
                max_step(s1, ds1), max_step(s2, ds2), max_step(s3, ds3),
                max_step(z1, dz1), max_step(z2, dz2), max_step(z3, dz3),
            )

        d = solve(bnd * s1 * z1, bnd * s2 * z2, s3 * z3)
        alpha = step(d)
        _, _, _, ds1, ds2, ds3, dz1, dz2, dz3 = d
        mu_aff = float(
            bnd @ ((s1 + alpha * ds1) * (z1 + alpha * dz1) + (s2 + alpha * ds2) * (z2 + alpha * dz2))
            + (s3 + alpha * ds3) @ (z3 + alpha * dz3)
        ) / m
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
        d = solve(
            bnd * (s1 * z1 + ds1 * dz1 - sigma * mu),
            bnd * (s2 * z2 + ds2 * dz2 - sigma * mu),
            s3 * z3 + ds3 * dz3 - sigma * mu,
        )
        alpha = min(1.0, 0.99 * step(d))
        dw, dt, dnu, ds1, ds2, ds3, dz1, dz2, dz3 = d
        w = w + alpha * dw
        t = t + alpha * dt
        nu = nu + alpha * dnu
        s1 = np.where(bnd > 0, s1 + alpha * ds1, 1.0)
        s2 = np.where(bnd > 0, s2 + alpha * ds2, 1.0)
        z1 = np.where(bnd > 0, z1 + alpha * dz1, 1.0)
        z2 = np.where(bnd > 0, z2 + alpha * dz2, 1.0)
        s3 = s3 + alpha * ds3
        z3 = z3 + alpha * dz3
    return w, it, status


def _active_set_refine(Q, c, thr, w0, max_iter: int = 100):
    """Unconstrained active-set iteration started from the support of ``w0``.

    Each step solves stationarity on the support with fixed signs, then drops
    the worst sign violation or else adds the worst off-support violation of
    ``|grad_j| <= thr_j``.  Returns ``None`` when it does not settle.
    """
    n = w0.size
    wmax = float(np.max(np.abs(w0), initial=0.0))
    on = (np.abs(w0) > 1e-6 * wmax) | (thr == 0)
    sgn = np.sign(w0)
    for _ in range(max_iter):
        S = np.flatnonzero(on)
        w = np.zeros(n)
        if S.size:
            w[S] = np.linalg.lstsq(Q[np.ix_(S, S)], c[S] - thr[S] * sgn[S], rcond=None)[0]
            flip = (w[S] * sgn[S] < 0) & (thr[S] > 0)
            if np.any(flip):
                bad = S[flip]
                on[bad[np.argmax(np.abs(w[bad]))]] = False
                continue
        grad = c - Q @ w
        excess = np.where(on, -np.inf, np.abs(grad) - thr * (1.0 + 1e-12) - 1e-14 * (1.0 + np.abs(c)))
        j = int(np.argmax(excess))
        if excess[j] <= 0:
            return w
        on[j] = True
        sgn[j] = np.sign(grad[j])
    return None


def _polish(Q, c, yy, thr, w0, constraints: LinearConstraints, feas_tol: float):
    """Re-solve the optimality conditions on the support of ``w0``.

    For several support thresholds, including cuts at the widest gaps in
    ``|w0|``, the reduced system (stationarity on the
    support with fixed signs, equalities, and inequalities active at ``w0``)
    is solved in the least-squares sense.  Without constraints an active-set
    refinement adds one more candidate.  A candidate is accepted when it is
    feasible, keeps the signs of ``w0`` and does not increase the objective.
    """
    n = w0.size
    f0 = _gram_objective(Q, c, yy, thr, w0)
    best, best_f = None, f0 + 1e-13 * max(1.0, abs(f0))
    wmax = float(np.max(np.abs(w0), initial=0.0))
    if wmax == 0.0:
        return None
    A, b = constraints.eq_matrix, constraints.eq_rhs
    G, h = constraints.ineq_matrix, constraints.ineq_rhs
    act_G = None
    if G is not None:
        slack = h - G @ w0
        act = slack <= 1e-7 * (1.0 + np.abs(h))
        act_G = (G[act], h[act])
    grad = c - Q @ w0
    cuts = [rel * wmax for rel in _POLISH_THRESHOLDS]
    # Cuts at the widest gaps between sorted magnitudes catch spurious entries
    # too large for the fixed thresholds.
    mags = np.sort(np.abs(w0[w0 != 0]))[::-1]
    if mags.size > 1:
        ratio = mags[:-1] / mags[1:]
        for k in np.argsort(ratio)[::-1][:_POLISH_GAP_CUTS]:
            if ratio[k] > 10.0:
                cuts.append(float(np.sqrt(mags[k] * mags[k + 1])))
    candidates = [np.flatnonzero((np.abs(w0) > cut) | (thr == 0)) for cut in cuts]
    seen = set()
    for S in candidates:
        key = tuple(S)
        if key in seen or S.size == 0:
            continue
        seen.add(key)
        sgn = np.where(w0[S] != 0, np.sign(w0[S]), np.sign(grad[S]))
        rows = [np.hstack([2.0 * Q[np.ix_(S, S)], *([] if A is None else [A[:, S].T]),
                           *([] if act_G is None else [act_G[0][:, S].T])])]
        rhs = [2.0 * c[S] - 2.0 * thr[S] * sgn]
        k_extra = (0 if A is None else A.shape[0]) + (0 if act_G is None else act_G[0].shape[0])
        if A is not None:
            rows.append(np.hstack([A[:, S], np.zeros((A.shape[0], k_extra))]))
            rhs.append(b)
        if act_G is not None and act_G[0].shape[0]:
            rows.append(np.hstack([act_G[0][:, S], np.zeros((act_G[0].shape[0], k_extra))]))
            rhs.append(act_G[1])
        K = np.vstack(rows)
        r = np.concatenate(rhs)
        sol = np.linalg.lstsq(K, r, rcond=None)[0]
        w = np.zeros(n)
        w[S] = sol[: S.size]
        pen = thr[S] > 0
        if np.any(w[S][pen] * sgn[pen] < 0):
            continue
        eq_v, in_v = constraints.violation(w)
        if max(eq_v, in_v) > feas_tol:
            continue
        f = _gram_objective(Q, c, yy, thr, w)
        if f <= best_f:
            best, best_f = w, f
    if constraints.is_empty:
        w = _active_set_refine(Q, c, thr, w0)
        if w is not None and _gram_objective(Q, c, yy, thr, w) <= best_f:
            best = w
    return best


def solve_gram(
    Q: np.ndarray,
    c: np.ndarray,
    yy: float,
    thr: np.ndarray,
    constraints: LinearConstraints | None = None,
    tol: float = 1e-8,
    max_iter: int = 200,
    polish: bool = True,
) -> L1Solution:
    """Solve ``min yy - 2c'w + w'Qw + 2 thr'|w|`` subject to ``constraints``.

    This is the Gram-matrix entry point used by the reweighting loop, where
    ``Q = phi'phi``, ``c = phi'y``, ``yy = y'y`` and ``thr = lam * u``.
    """
    Q = np.asarray(Q, dtype=float)
    c = np.asarray(c, dtype=float)
    thr = np.asarray(thr, dtype=float)
    n = c.size
    cons = constraints if constraints is not None else LinearConstraints()
    cons.check_columns(n)
    if not cons.is_empty and not _is_feasible(cons, n):
        return L1Solution(np.zeros(n), float("nan"), "infeasible", 0, {"backend": kernels.BACKEND})

    diag = np.clip(np.diag(Q).copy(), 0.0, None)
    dmax = float(np.max(diag, initial=0.0))
    live = diag > 1e-28 * max(dmax, 1e-300) if dmax > 0 else np.zeros(n, dtype=bool)
    # Dead (all-zero) columns do not affect the fit; unless a constraint
    # involves them, the minimum-norm choice is 0.
    if not cons.is_empty:
        for mat in (cons.eq_matrix, cons.ineq_matrix):
            if mat is not None:
                live |= np.any(mat != 0, axis=0)
    idx = np.flatnonzero(live)
    w = np.zeros(n)
    info = {"backend": kernels.BACKEND, "polished": False}
    if idx.size == 0:
        return L1Solution(w, _gram_objective(Q, c, yy, thr, w), "converged", 0, info)

    d = np.sqrt(np.maximum(diag[idx], 1e-300))
    d[diag[idx] <= 1e-28 * max(dmax, 1e-300)] = 1.0
    Qs = Q[np.ix_(idx, idx)] / np.outer(d, d)
    cs = c[idx] / d
    ts = thr[idx] / d
    alpha = float(np.max(np.abs(cs)))
    sub = cons.restrict(idx)
    if alpha == 0.0:
        if cons.is_empty:
            return L1Solution(w, _gram_objective(Q, c, yy, thr, w), "converged", 0, info)
        scale_rhs = [np.max(np.abs(v), initial=0.0) for v in (cons.eq_rhs, cons.ineq_rhs) if v is not None]
        alpha = max([1.0] + [float(v) for v in scale_rhs])

    if sub.is_empty and np.all(np.abs(cs) <= ts):
        # Zero satisfies the optimality conditions outright.
        return L1Solution(w, _gram_objective(Q, c, yy, thr, w), "converged", 0, info)
    if sub.is_empty and np.all(ts == 0):
        v = np.linalg.lstsq(Qs, cs, rcond=None)[0] / alpha
        it, status = 0, kernels.STATUS_CONVERGED
        info["method"] = "lstsq"
    elif sub.is_empty:
        v, it, status = kernels.ipm_l1(Qs, cs / alpha, ts / alpha, tol, max_iter, yy / alpha**2)
        info["method"] = "ipm"
    else:
        # Scale constraint rows to unit infinity norm in the scaled variables.
        def scaled(mat, rhs):
            if mat is None:
                return None, None
            m2 = mat * (alpha / d)[None, :]
            nrm = np.max(np.abs(m2), axis=1)
            nrm[nrm == 0] = 1.0
            return m2 / nrm[:, None], rhs / nrm

        As, bs = scaled(sub.eq_matrix, sub.eq_rhs)
        Gs, hs = scaled(sub.ineq_matrix, sub.ineq_rhs)
        v, it, status = _ipm_constrained(Qs, cs / alpha, ts / alpha, As, bs, Gs, hs, tol, max_iter, yy / alpha**2)
        info["method"] = "ipm-constrained"
    w[idx] = alpha * v / d
    if status == kernels.STATUS_NUMERICAL:
        info["numerical_failure"] = True
    feas_tol = 1e-10 * (1.0 + max(
        float(np.max(np.abs(cons.eq_rhs), initial=0.0)) if cons.eq_rhs is not None else 0.0,
        float(np.max(np.abs(cons.ineq_rhs), initial=0.0)) if cons.ineq_rhs is not None else 0.0,
    ))
    if polish and info["method"] != "lstsq":
        wp = _polish(Q, c, yy, thr, w, cons, feas_tol)
        if wp is not None:
            w = wp
            info["polished"] = True
    status_name = "converged" if status == kernels.STATUS_CONVERGED else "max_iter"
    if status_name == "max_iter" and info["polished"]:
        # The polished point satisfies the optimality conditions on its support
        # with the objective no worse than the interior iterate.
        info["ipm_status"] = "max_iter"
    return L1Solution(w, _gram_objective(Q, c, yy, thr, w), status_name, int(it), info)


def solve_weighted_l1(
    phi,
    y,
    u,
    lam: float,
    constraints: LinearConstraints | None = None,
    tol: float = 1e-8,
    max_iter: int = 200,
    polish: bool = True,
) -> L1Solution:
    """Minimise ``||y - phi w||^2 + 2 lam sum_j u_j |w_j|`` under linear constraints.

    Parameters
    ----------
    phi : array_like, shape (M, N)
    y : array_like, shape (M,)
    u : array_like, shape (N,)
        Non-negative per-coordinate weights; ``u_j = 0`` leaves ``w_j``
        unpenalised.
    lam : float
        Positive regularisation level.
    constraints : LinearConstraints, optional
    tol : float
        Relative tolerance on residuals and duality gap of the interior-point
        iterations.
    max_iter : int
        Interior-point iteration cap.
    polish : bool
        Snap the solution onto its support (exact zeros) when this does not
        increase the objective.

    Returns
    -------
    L1Solution
        ``status`` is ``"infeasible"`` if the constraints admit no point.
    """
    phi = np.asarray(phi, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    if phi.ndim != 2 or phi.shape[0] != y.size:
        raise ValueError(f"phi shape {phi.shape} does not match y length {y.size}")
    if u.size != phi.shape[1]:
        raise ValueError(f"u has length {u.size}, expected {phi.shape[1]}")
    if np.any(u < 0) or not np.all(np.isfinite(u)):
        raise ValueError("reg_weights must be finite and non-negative")
    if not lam > 0:
        raise ValueError("lambda must be positive")
    cons = constraints if constraints is not None else LinearConstraints()
    cons.check_columns(phi.shape[1])
    if cons.is_empty and np.all(u == 0):
        w = np.linalg.lstsq(phi, y, rcond=None)[0]
        r = y - phi @ w
        return L1Solution(w, float(r @ r), "converged", 0, {"backend": kernels.BACKEND, "method": "lstsq"})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return solve_gram(phi.T @ phi, phi.T @ y, float(y @ y), lam * u, cons, tol, max_iter, polish)
