"""Reference sparse regression solvers: lasso, ISTA/FISTA and OMP.

All return :class:`~sparseid.weighted_l1.L1Solution`.  The lasso and ISTA
share the objective ``||y - phi w||^2 + 2 lam ||w||_1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .dictionary import RegressionProblem
from .weighted_l1 import L1Solution, solve_weighted_l1

ALGORITHMS = ("lasso", "ista", "omp")


@dataclass(frozen=True)
class BaselineSpec:
    """Algorithm choice and its knobs.

    ``lam`` is used by lasso and ista (``None`` means ``0.1 ||phi'y||_inf``);
    ``max_atoms`` and ``residual_tol`` by omp.  ``normalize`` runs on
    unit-norm columns and rescales the weights back.
    """

    algorithm: str
    lam: float | None = None
    max_atoms: int | None = None
    residual_tol: float = 0.0
    max_iter: int | None = None
    tol: float | None = None
    accelerate: bool = True
    normalize: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if self.lam is not None and not self.lam > 0:
            raise ValueError("lam must be positive")
        if self.max_atoms is not None and self.max_atoms < 1:
            raise ValueError("max_atoms must be >= 1")
        if self.residual_tol < 0:
            raise ValueError("residual_tol must be >= 0")


def default_lambda(phi, y) -> float:
    """``0.1 * ||phi' y||_inf``, a fixed fraction of the all-zero threshold."""
    val = 0.1 * float(np.max(np.abs(np.asarray(phi).T @ np.asarray(y)), initial=0.0))
    return val if val > 0 else 1e-12


def power_iteration(A: np.ndarray, iters: int = 1000, tol: float = 1e-12, seed: int = 0) -> float:
    """Largest eigenvalue of a symmetric PSD matrix."""
    n = A.shape[0]
    if n == 0:
        return 0.0
    v = np.random.default_rng(seed).normal(size=n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        Av = A @ v
        nrm = float(np.linalg.norm(Av))
        if nrm == 0.0:
            return 0.0
        new = float(v @ Av)
        v = Av / nrm
        if abs(new - lam) <= tol * max(abs(new), 1e-300):
            lam = new
            break
        lam = new
    # A Rayleigh quotient is a lower bound; pad slightly so 1/L is a safe step.
    return lam * (1.0 + 1e-6)


def lasso(phi, y, lam: float, tol: float = 1e-8, max_iter: int = 200) -> L1Solution:
    """Plain lasso via the weighted-l1 solver with unit weights."""
    phi = np.asarray(phi, dtype=float)
    return solve_weighted_l1(phi, y, np.ones(phi.shape[1]), lam, None, tol, max_iter)


def ista(phi, y, lam: float, tol: float = 1e-12, max_iter: int = 200000, accelerate: bool = True) -> L1Solution:
    """Proximal gradient with step ``1/L``, ``L = 2 lambda_max(phi'phi)``.

    With ``accelerate`` this is FISTA with adaptive restart.
    """
    phi = np.asarray(phi, dtype=float)
    y = np.asarray(y, dtype=float)
    Q = phi.T @ phi
    c = phi.T @ y
    L = 2.0 * power_iteration(Q)
    if L == 0.0:
        w = np.zeros(phi.shape[1])
        return L1Solution(w, float(y @ y), "converged", 0, {"backend": kernels.BACKEND})
    w, it, status = kernels.fista_l1(Q, c, np.full(c.size, lam), 1.0 / L, tol, max_iter, accelerate)
    r = y - phi @ w
    obj = float(r @ r + 2.0 * lam * np.abs(w).sum())
    return L1Solution(
        w, obj, "converged" if status == kernels.STATUS_CONVERGED else "max_iter", int(it),
        {"backend": kernels.BACKEND, "lipschitz": L},
    )


def omp(phi, y, max_atoms: int | None = None, residual_tol: float = 0.0) -> L1Solution:
    """Orthogonal matching pursuit.

    Adds the column most correlated with the residual (correlations are
    normalised by column norm), refits by least squares on the selection, and
    stops when ``||r|| <= residual_tol``, the cap ``min(M, N, max_atoms)`` is
    reached, or the residual stops decreasing.  A rank-deficient selection
    is refit with the minimum-norm solution and reported through
    ``info["degenerate"]`` and the status ``"degenerate"``.
    """
    phi = np.asarray(phi, dtype=float)
    y = np.asarray(y, dtype=float)
    M, N = phi.shape
    cap = min(M, N, max_atoms if max_atoms is not None else N)
    norms = np.linalg.norm(phi, axis=0)
    usable = norms > 0
    sel: list[int] = []
    w = np.zeros(N)
    r = y.copy()
    rn = float(np.linalg.norm(r))
    history = [rn]
    degenerate = False
    while len(sel) < cap and rn > residual_tol:
        corr = np.zeros(N)
        corr[usable] = np.abs(phi[:, usable].T @ r) / norms[usable]
        corr[sel] = -1.0
        j = int(np.argmax(corr))
        if corr[j] <= 0:
            break
        trial = sel + [j]
        sub = phi[:, trial]
        coef, _, rank, _ = np.linalg.lstsq(sub, y, rcond=None)
        if rank < len(trial):
            degenerate = True
        r_new = y - sub @ coef
        rn_new = float(np.linalg.norm(r_new))
        if rn_new >= rn * (1.0 - 1e-12):
            break
        sel = trial
        w = np.zeros(N)
        w[sel] = coef
        r, rn = r_new, rn_new
        history.append(rn)
    status = "degenerate" if degenerate else "converged"
    obj = float(r @ r)
    return L1Solution(w, obj, status, len(sel), {"degenerate": degenerate, "residual_history": history, "selected": sel})


def _normalized(phi):
    s = np.linalg.norm(phi, axis=0)
    s[s == 0] = 1.0
    return phi / s, s


def run_baseline(spec: BaselineSpec, problem: RegressionProblem | tuple) -> L1Solution:
    """Run one baseline on ``problem`` (a RegressionProblem or ``(phi, y)``)."""
    if isinstance(problem, RegressionProblem):
        phi, y = problem.phi, problem.y
    else:
        phi, y = (np.asarray(a, dtype=float) for a in problem)
    scale = np.ones(phi.shape[1])
    if spec.normalize:
        phi, scale = _normalized(phi)
    lam = spec.lam if spec.lam is not None else default_lambda(phi, y)
    if spec.algorithm == "lasso":
        sol = lasso(phi, y, lam, spec.tol or 1e-8, spec.max_iter or 200)
    elif spec.algorithm == "ista":
        sol = ista(phi, y, lam, spec.tol or 1e-12, spec.max_iter or 200000, spec.accelerate)
    else:
        sol = omp(phi, y, spec.max_atoms, spec.residual_tol)
    sol.info["lambda"] = lam if spec.algorithm != "omp" else math.nan
    if spec.normalize:
        sol.w = sol.w / scale
    return sol
