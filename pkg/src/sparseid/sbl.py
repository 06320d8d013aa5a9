"""Sparse Bayesian learning by iteratively reweighted l1 minimisation.

Model: ``y = phi w + xi`` with ``xi ~ N(0, lam I)`` and independent Gaussian
scale-mixture priors ``w_j ~ N(0, gamma_j)``.  The hyperparameters ``gamma``
minimise the evidence cost

    L(gamma) = log|C| + y' C^{-1} y + sum_j p(gamma_j),   C = lam I + phi Gamma phi'

which is done by majorise-minimise: the concave part ``log|C| + sum p`` is
replaced by its tangent, and the resulting problem over ``(w, gamma)`` is a
weighted lasso in ``w`` with weights ``u_j = sqrt(dL_concave/dgamma_j)``.

All quantities involving ``C`` are evaluated through the scaled support
matrix ``B = phi_S diag(sqrt(gamma_S))`` and ``K = lam I + B'B`` (size of the
support) when the support is smaller than ``M``; otherwise ``C`` itself is
factorised.  No explicit inverses are formed.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .dictionary import RegressionProblem
from .weighted_l1 import LinearConstraints, solve_gram, _is_feasible

LAMBDA_FLOOR = 1e-10
HYPERPRIOR_KINDS = ("flat", "log_penalty", "linear_penalty")


@dataclass(frozen=True)
class Hyperprior:
    """Penalty ``p(gamma)`` on the prior variances.

    ``flat``: ``p = 0``.  ``log_penalty``: ``p = c log(gamma)``.
    ``linear_penalty``: ``p = c gamma``.  For the log penalty only strictly
    positive ``gamma_j`` contribute to the cost (zero variances are pruned
    columns and carry no penalty).
    """

    kind: str = "flat"
    c: float = 0.0

    def __post_init__(self):
        if self.kind not in HYPERPRIOR_KINDS:
            raise ValueError(f"hyperprior kind must be one of {HYPERPRIOR_KINDS}")
        if not (self.c >= 0 and math.isfinite(self.c)):
            raise ValueError("hyperprior parameter c must be finite and >= 0")

    def p(self, gamma: np.ndarray) -> np.ndarray:
        gamma = np.asarray(gamma, dtype=float)
        if self.kind == "flat" or self.c == 0:
            return np.zeros_like(gamma)
        if self.kind == "linear_penalty":
            return self.c * gamma
        out = np.zeros_like(gamma)
        pos = gamma > 0
        out[pos] = self.c * np.log(gamma[pos])
        return out

    def dp(self, gamma: np.ndarray) -> np.ndarray:
        gamma = np.asarray(gamma, dtype=float)
        if self.kind == "flat" or self.c == 0:
            return np.zeros_like(gamma)
        if self.kind == "linear_penalty":
            return np.full_like(gamma, self.c)
        with np.errstate(divide="ignore"):
            return self.c / gamma


@dataclass(frozen=True)
class SblConfig:
    """Knobs of :func:`identify`.

    Attributes
    ----------
    lam : float or "auto"
        Noise variance.  ``"auto"`` calls :func:`estimate_lambda`.
    hyperprior : Hyperprior
    prune_threshold : float
        Columns with ``w_j^2 / ||w||^2`` below this are removed.
    max_outer_iter : int
    stop_tol : float
        Stop when ``||w_k - w_{k-1}|| / ||w_k||`` falls below this.
    reweight_tol : float
        Stopping also requires ``max_j |u_j^{k+1} - u_j^k| / u_j^k`` on the
        active set to fall below this.  With small ``lam`` the weights settle
        long before the reweights do.
    inner_tol, inner_max_iter
        Passed to the weighted-l1 solver.
    guard_pruning : bool
        Defer a pruning step that would increase the recorded cost; the
        column is removed at the end of the run instead.
    normalize : bool
        Run on unit-norm columns and rescale the weights back.  Pruning then
        uses the energy of the normalised weights.
    """

    lam: float | str = "auto"
    hyperprior: Hyperprior = field(default_factory=Hyperprior)
    prune_threshold: float = 1e-4
    max_outer_iter: int = 30
    stop_tol: float = 1e-6
    reweight_tol: float = 1e-5
    inner_tol: float = 1e-8
    inner_max_iter: int = 200
    guard_pruning: bool = True
    normalize: bool = False

    def __post_init__(self):
        if isinstance(self.lam, str):
            if self.lam != "auto":
                raise ValueError("lam must be positive or 'auto'")
        elif not (self.lam > 0 and math.isfinite(self.lam)):
            raise ValueError("lam must be positive or 'auto'")
        if not 0 < self.prune_threshold < 1:
            raise ValueError("prune_threshold must lie in (0, 1)")
        if self.max_outer_iter < 1:
            raise ValueError("max_outer_iter must be >= 1")
        if not self.stop_tol > 0:
            raise ValueError("stop_tol must be positive")
        if not self.reweight_tol > 0:
            raise ValueError("reweight_tol must be positive")


@dataclass
class SblResult:
    """Output of :func:`identify`.

    ``posterior_mean`` and ``posterior_cov`` are restricted to ``support``.
    ``status`` is one of ``converged``, ``max_iter``, ``all_pruned`` or
    ``infeasible``.
    """

    w_hat: np.ndarray
    gamma_hat: np.ndarray
    support: np.ndarray
    support_labels: list[str]
    posterior_mean: np.ndarray
    posterior_cov: np.ndarray
    cost_trace: list[float]
    iterations: int
    status: str
    lam: float
    u: np.ndarray
    u_history: list[np.ndarray] = field(default_factory=list, repr=False)
    prune_history: list[int] = field(default_factory=list)
    elapsed_s: float = 0.0
    target_label: str = ""

    def to_dict(self) -> dict:
        return {
            "target": self.target_label,
            "status": self.status,
            "iterations": self.iterations,
            "lambda": self.lam,
            "support": [int(j) for j in self.support],
            "support_labels": list(self.support_labels),
            "coefficients": [float(self.w_hat[j]) for j in self.support],
            "gamma": [float(self.gamma_hat[j]) for j in self.support],
            "posterior_mean": [float(v) for v in self.posterior_mean],
            "posterior_std": [float(math.sqrt(max(v, 0.0))) for v in np.diag(self.posterior_cov)],
            "cost_trace": [float(v) for v in self.cost_trace],
            "w_hat": [float(v) for v in self.w_hat],
            "elapsed_s": self.elapsed_s,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


# ---------------------------------------------------------------------------
# Linear algebra on C = lam I + phi Gamma phi'
# ---------------------------------------------------------------------------


def _check(phi, y, gamma, lam):
    phi = np.asarray(phi, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    gamma = np.asarray(gamma, dtype=float).reshape(-1)
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if phi.ndim != 2 or phi.shape != (y.size, gamma.size):
        raise ValueError(f"inconsistent shapes phi {phi.shape}, y {y.size}, gamma {gamma.size}")
    if np.any(gamma < 0):
        raise ValueError("gamma must be non-negative")
    for a in (phi, y, gamma):
        if not np.all(np.isfinite(a)):
            raise ValueError("inputs must be finite")
    return phi, y, gamma


def _chol(mat):
    try:
        return cho_factor(mat, lower=True, check_finite=False)
    except LinAlgError:
        pass
    # Rank-deficient up to rounding: add an escalating diagonal jitter.
    scale = max(1.0, float(np.max(np.abs(np.diag(mat)))))
    eye = np.eye(mat.shape[0])
    for rel in (1e-15, 1e-13, 1e-11, 1e-9):
        try:
            return cho_factor(mat + rel * scale * eye, lower=True, check_finite=False)
        except LinAlgError:
            continue
    raise LinAlgError("matrix is not positive definite even after jitter")


def _support_factor(phi, gamma, lam):
    S = np.flatnonzero(gamma > 0)
    sg = np.sqrt(gamma[S])
    B = phi[:, S] * sg
    K = lam * np.eye(S.size) + B.T @ B
    return S, sg, B, _chol(K) if S.size else None


def posterior_moments(phi, y, gamma, lam, form: str = "auto"):
    """Posterior mean and covariance of ``w`` given ``gamma``.

    ``form="direct"`` factorises ``C = lam I + phi Gamma phi'`` (M x M);
    ``form="dual"`` works on the support ``S = {gamma > 0}`` with
    ``Sigma_S = (Gamma_S^{-1} + phi_S' phi_S / lam)^{-1}`` and
    ``mean_S = Sigma_S phi_S' y / lam``, evaluated through
    ``K = lam I + B'B`` with ``B = phi_S Gamma_S^{1/2}``.  ``"auto"`` picks the
    smaller system.

    Returns
    -------
    mean : ndarray, shape (N,)
    cov : ndarray, shape (N, N)
        Symmetric, zero outside the support.
    """
    phi, y, gamma = _check(phi, y, gamma, lam)
    M, N = phi.shape
    mean = np.zeros(N)
    cov = np.zeros((N, N))
    S = np.flatnonzero(gamma > 0)
    if S.size == 0:
        return mean, cov
    if form == "auto":
        form = "dual" if S.size < M else "direct"
    if form == "direct":
        G = np.diag(gamma)
        C = lam * np.eye(M) + (phi * gamma) @ phi.T
        fac = _chol(C)
        mean = gamma * (phi.T @ cho_solve(fac, y))
        PG = phi * gamma
        cov = G - PG.T @ cho_solve(fac, PG)
    elif form == "dual":
        _, sg, B, fac = _support_factor(phi, gamma, lam)
        mean[S] = sg * cho_solve(fac, B.T @ y)
        Kinv = cho_solve(fac, np.eye(S.size))
        cov[np.ix_(S, S)] = lam * (sg[:, None] * Kinv * sg[None, :])
    else:
        raise ValueError("form must be 'auto', 'direct' or 'dual'")
    cov = 0.5 * (cov + cov.T)
    return mean, cov


def marginal_cost(phi, y, gamma, lam, hyperprior: Hyperprior | None = None) -> float:
    """Evidence cost ``log|C| + y'C^{-1}y + sum_j p(gamma_j)``.

    Uses ``log|C| = (M-k) log lam + log|K|`` and
    ``y'C^{-1}y = ||y - phi m||^2 / lam + sum_S m_j^2 / gamma_j`` (``m`` the
    posterior mean) when the support size ``k`` is below ``M``.
    """
    phi, y, gamma = _check(phi, y, gamma, lam)
    hp = hyperprior or Hyperprior()
    M = phi.shape[0]
    S = np.flatnonzero(gamma > 0)
    penalty = float(np.sum(hp.p(gamma)))
    if S.size < M:
        if S.size == 0:
            return M * math.log(lam) + float(y @ y) / lam + penalty
        _, sg, B, fac = _support_factor(phi, gamma, lam)
        logdet = (M - S.size) * math.log(lam) + 2.0 * float(np.sum(np.log(np.diag(fac[0]))))
        a = cho_solve(fac, B.T @ y)
        r = y - B @ a
        quad = float(r @ r) / lam + float(a @ a)
        return logdet + quad + penalty
    C = lam * np.eye(M) + (phi[:, S] * gamma[S]) @ phi[:, S].T
    fac = _chol(C)
    logdet = 2.0 * float(np.sum(np.log(np.diag(fac[0]))))
    return logdet + float(y @ cho_solve(fac, y)) + penalty


def reweight_diagonal(phi, gamma, lam, columns=None) -> np.ndarray:
    """``phi_j' C^{-1} phi_j`` for the requested columns.

    With support ``S`` smaller than ``M`` this is
    ``||phi_j - B a_j||^2 / lam + ||a_j||^2`` where ``a_j = K^{-1} B' phi_j``,
    a sum of non-negative terms that avoids cancellation.
    """
    phi = np.asarray(phi, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    cols = np.arange(phi.shape[1]) if columns is None else np.asarray(columns, dtype=np.int64)
    P = phi[:, cols]
    M = phi.shape[0]
    S = np.flatnonzero(gamma > 0)
    if S.size == 0:
        return np.einsum("ij,ij->j", P, P) / lam
    if S.size < M:
        _, _, B, fac = _support_factor(phi, gamma, lam)
        A = cho_solve(fac, B.T @ P)
        R = P - B @ A
        return np.einsum("ij,ij->j", R, R) / lam + np.einsum("ij,ij->j", A, A)
    C = lam * np.eye(M) + (phi[:, S] * gamma[S]) @ phi[:, S].T
    fac = _chol(C)
    return np.einsum("ij,ij->j", P, cho_solve(fac, P))


def update_reweights(phi, lam, u_prev, w_curr, hyperprior: Hyperprior | None = None, active=None) -> np.ndarray:
    """Next l1 weights ``u_j = sqrt(phi_j' C^{-1} phi_j + p'(gamma_j))``.

    ``gamma_j = |w_j| / u_j`` on the active set (columns with ``u_prev > 0``
    unless ``active`` is given); inactive columns get ``u = 0`` and
    ``gamma = 0``.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    phi = np.asarray(phi, dtype=float)
    u_prev = np.asarray(u_prev, dtype=float).reshape(-1)
    w_curr = np.asarray(w_curr, dtype=float).reshape(-1)
    if not np.all(np.isfinite(w_curr)):
        raise ValueError("weights must be finite")
    act = np.flatnonzero(u_prev > 0) if active is None else np.asarray(active, dtype=np.int64)
    if np.any(u_prev[act] <= 0):
        raise ValueError("u_prev must be positive on active columns")
    gamma = np.zeros(phi.shape[1])
    gamma[act] = np.abs(w_curr[act]) / u_prev[act]
    hp = hyperprior or Hyperprior()
    diag = reweight_diagonal(phi, gamma, lam, act)
    u = np.zeros(phi.shape[1])
    u[act] = np.sqrt(np.maximum(diag + hp.dp(gamma[act]), 0.0))
    return u


# ---------------------------------------------------------------------------
# Noise level
# ---------------------------------------------------------------------------


def estimate_lambda(problem: RegressionProblem | tuple) -> float:
    """Noise variance from the residual of a lightly regularised fit.

    The estimate is floored at ``LAMBDA_FLOOR * mean(y^2)`` so that noiseless
    data still gives a well-conditioned ``C``.

    With more rows than columns this is the mean squared residual of a ridge
    regression with ridge ``1e-6 trace(phi'phi) / N``.  Otherwise that ridge
    fit interpolates the data, so the fit is restricted to ``k = M // 2``
    columns picked by orthogonal matching pursuit and the residual sum of
    squares is divided by ``M - k``.
    """
    if isinstance(problem, RegressionProblem):
        phi, y = problem.phi, problem.y
    else:
        phi, y = (np.asarray(a, dtype=float) for a in problem)
    M, N = phi.shape
    if M < 2:
        raise ValueError("need at least 2 rows to estimate the noise level")
    yy = float(y @ y)
    floor = max(1e-300, LAMBDA_FLOOR * yy / M)
    if M > N:
        G = phi.T @ phi
        ridge = 1e-6 * float(np.trace(G)) / N
        if ridge <= 0:
            return max(yy / M, floor)
        w = cho_solve(_chol(G + ridge * np.eye(N)), phi.T @ y)
        r = y - phi @ w
        return max(float(r @ r) / M, floor)
    from .baselines import omp

    k = max(1, M // 2)
    sol = omp(phi, y, max_atoms=k, residual_tol=0.0)
    r = y - phi @ sol.w
    dof = max(1, M - int(np.count_nonzero(sol.w)))
    return max(float(r @ r) / dof, floor)


# ---------------------------------------------------------------------------
# Algorithm
# ---------------------------------------------------------------------------


def _as_problem(problem) -> RegressionProblem:
    if isinstance(problem, RegressionProblem):
        return problem
    phi, y = problem
    phi = np.asarray(phi, dtype=float)
    return RegressionProblem(y, phi, tuple(f"w{j}" for j in range(phi.shape[1])))


def identify(
    problem: RegressionProblem | tuple,
    config: SblConfig | None = None,
    constraints: LinearConstraints | None = None,
) -> SblResult:
    """Sparse identification of ``w`` in ``y = phi w + noise``.

    Iteration ``k``:

    1. solve the weighted lasso with weights ``lam * u`` on the active columns;
    2. set ``gamma_j = |w_j| / u_j``;
    3. prune columns with ``w_j^2 / ||w||^2 < prune_threshold`` and record the
       evidence cost at the pruned ``gamma``;
    4. update ``u`` at that ``gamma``;
    5. stop when the relative change of ``w`` is below ``stop_tol`` and that
       of ``u`` below ``reweight_tol``.

    Starting from ``u = 1`` the first step is the plain lasso.  Because the
    reweighting is done at the recorded ``gamma`` the cost trace is
    non-increasing; a pruning step that would raise it is deferred to the end
    of the run when ``guard_pruning`` is set.

    Parameters
    ----------
    problem : RegressionProblem or (phi, y)
    config : SblConfig, optional
    constraints : LinearConstraints, optional
        Linear constraints on the full weight vector.  Columns appearing in
        equality constraints are never pruned.

    Returns
    -------
    SblResult
    """
    t0 = time.perf_counter()
    prob = _as_problem(problem)
    cfg = config or SblConfig()
    cons = constraints if constraints is not None else LinearConstraints()
    phi_raw, y = prob.phi, prob.y
    M, N = phi_raw.shape
    cons.check_columns(N)
    lam = estimate_lambda(prob) if cfg.lam == "auto" else float(cfg.lam)
    hp = cfg.hyperprior

    if cfg.normalize:
        scale = np.linalg.norm(phi_raw, axis=0)
        scale[scale == 0] = 1.0
    else:
        scale = np.ones(N)
    phi = phi_raw / scale
    if cfg.normalize and not cons.is_empty:
        cons = LinearConstraints(
            None if cons.eq_matrix is None else cons.eq_matrix / scale,
            cons.eq_rhs,
            None if cons.ineq_matrix is None else cons.ineq_matrix / scale,
            cons.ineq_rhs,
        )
    Q = phi.T @ phi
    c = phi.T @ y
    yy = float(y @ y)
    exempt = np.zeros(N, dtype=bool)
    if cons.eq_matrix is not None:
        exempt |= np.any(cons.eq_matrix != 0, axis=0)

    active = np.ones(N, dtype=bool)
    u = np.ones(N)
    w = np.zeros(N)
    gamma = np.zeros(N)
    trace: list[float] = []
    u_hist: list[np.ndarray] = [u.copy()]
    prune_hist: list[int] = []
    status = "max_iter"
    k = 0
    for k in range(1, cfg.max_outer_iter + 1):
        A = np.flatnonzero(active)
        if A.size == 0:
            status = "all_pruned"
            k -= 1
            break
        sol = solve_gram(
            Q[np.ix_(A, A)], c[A], yy, lam * u[A], cons.restrict(A) if not cons.is_empty else None,
            cfg.inner_tol, cfg.inner_max_iter,
        )
        if sol.status == "infeasible":
            status = "infeasible"
            break
        wn = np.zeros(N)
        wn[A] = sol.w
        gam = np.zeros(N)
        gam[A] = np.abs(sol.w) / u[A]

        energy = wn * wn
        total = float(energy.sum())
        if total > 0:
            small = active & (energy < cfg.prune_threshold * total) & ~exempt
        else:
            small = active & ~exempt
        if np.any(small) and not cons.is_empty:
            keep = np.flatnonzero(active & ~small)
            if not _is_feasible(cons.restrict(keep), keep.size):
                small[:] = False
        gam_p = np.where(small, 0.0, gam)
        cost_p = marginal_cost(phi, y, gam_p, lam, hp)
        slack = 1e-8 * (1.0 + abs(trace[-1])) if trace else 0.0
        if not trace or not np.any(small) or not cfg.guard_pruning or cost_p <= trace[-1] + slack:
            wn[small] = 0.0
            active &= ~small
            gam = gam_p
            cost = cost_p
            prune_hist.append(int(np.count_nonzero(small)))
        else:
            cost = marginal_cost(phi, y, gam, lam, hp)
            prune_hist.append(0)
        trace.append(cost)

        nrm = float(np.linalg.norm(wn))
        change = float(np.linalg.norm(wn - w)) / nrm if nrm > 0 else (0.0 if not np.any(w) else math.inf)
        w = wn
        gamma = gam
        # Columns whose weight or variance vanished cannot be reweighted
        # under a log penalty (p' diverges); they leave the active set.
        if hp.kind == "log_penalty" and hp.c > 0:
            active &= (gamma > 0) | exempt
        if not np.any(active):
            status = "all_pruned"
            u = np.zeros(N)
            u_hist.append(u.copy())
            break
        A = np.flatnonzero(active)
        u_new = np.zeros(N)
        u_new[A] = update_reweights(phi, lam, np.where(active, u, 0.0), w, hp, active=A)[A]
        if np.any(u_new[A] <= 0) or not np.all(np.isfinite(u_new[A])):
            bad = A[(u_new[A] <= 0) | ~np.isfinite(u_new[A])]
            u_new[bad] = 0.0
            active[bad] = False
            w[bad] = 0.0
            gamma[bad] = 0.0
        keep = u[A] > 0
        u_change = float(np.max(np.abs(u_new[A][keep] - u[A][keep]) / u[A][keep], initial=0.0))
        u = u_new
        u_hist.append(u.copy())
        if change < cfg.stop_tol and u_change < cfg.reweight_tol:
            status = "converged"
            break

    # Deferred pruning: zero any column still below the energy threshold.
    energy = w * w
    total = float(energy.sum())
    if total > 0:
        small = (energy < cfg.prune_threshold * total) & ~exempt
        w[small] = 0.0
        gamma[small] = 0.0
    support = np.flatnonzero(w != 0)
    gamma_hat = np.zeros(N)
    gamma_hat[support] = gamma[support]
    if support.size == 0 and status != "infeasible":
        status = "all_pruned"

    # Back to the original column scaling.
    w_hat = w / scale
    gamma_hat = gamma_hat / scale**2
    mean_full, cov_full = posterior_moments(phi_raw, y, gamma_hat, lam)
    return SblResult(
        w_hat=w_hat,
        gamma_hat=gamma_hat,
        support=support,
        support_labels=[prob.column_labels[j] for j in support],
        posterior_mean=mean_full[support],
        posterior_cov=cov_full[np.ix_(support, support)],
        cost_trace=trace,
        iterations=k,
        status=status,
        lam=lam,
        u=u * scale,
        u_history=u_hist,
        prune_history=prune_hist,
        elapsed_s=time.perf_counter() - t0,
        target_label=prob.target_label,
    )
