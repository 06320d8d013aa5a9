import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import minimize

from sparseid.weighted_l1 import (
    LinearConstraints,
    kkt_residual,
    solve_gram,
    solve_weighted_l1,
    weighted_l1_objective,
)


def soft_threshold(z, t):
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def split_oracle(phi, y, u, lam, A=None, b=None, G=None, h=None):
    """Independent solve of the same problem as a smooth QP in (p, n) >= 0, w = p - n."""
    n = phi.shape[1]
    Q, c = phi.T @ phi, phi.T @ y
    t = 2.0 * lam * np.asarray(u, dtype=float)

    def f(z):
        w = z[:n] - z[n:]
        g = 2.0 * (Q @ w - c)
        return float(w @ Q @ w - 2 * c @ w + y @ y + t @ (z[:n] + z[n:])), np.concatenate([g + t, -g + t])

    cons = []
    if A is not None:
        cons.append({"type": "eq", "fun": lambda z: A @ (z[:n] - z[n:]) - b})
    if G is not None:
        cons.append({"type": "ineq", "fun": lambda z: h - G @ (z[:n] - z[n:])})
    z0 = np.zeros(2 * n)
    if cons:
        res = minimize(f, z0, jac=True, method="SLSQP", bounds=[(0, None)] * (2 * n), constraints=cons,
                       options={"ftol": 1e-15, "maxiter": 2000})
    else:
        res = minimize(f, z0, jac=True, method="L-BFGS-B", bounds=[(0, None)] * (2 * n),
                       options={"ftol": 1e-16, "gtol": 1e-12, "maxiter": 20000})
    return res.x[:n] - res.x[n:], res.fun


# -- worked examples ----------------------------------------------------------


def test_identity_soft_threshold_example():
    sol = solve_weighted_l1(np.eye(2), [3.0, 0.5], [1.0, 1.0], 1.0)
    np.testing.assert_allclose(sol.w, [2.0, 0.0], atol=1e-10)
    assert sol.status == "converged"


def test_identity_unregularised_example():
    sol = solve_weighted_l1(np.eye(2), [3.0, 0.5], [0.0, 0.0], 1.0)
    np.testing.assert_allclose(sol.w, [3.0, 0.5], atol=1e-12)


def test_identity_equality_constraint_example():
    cons = LinearConstraints(eq_matrix=[[0.0, 1.0]], eq_rhs=[1.0])
    sol = solve_weighted_l1(np.eye(2), [3.0, 0.5], [1.0, 1.0], 1.0, cons)
    np.testing.assert_allclose(sol.w, [2.0, 1.0], atol=1e-8)


def test_equality_example_against_grid_oracle():
    # Brute force over w1 with w2 pinned to 1; refine the grid around the best point.
    def obj(w1):
        return (3 - w1) ** 2 + (0.5 - 1) ** 2 + 2 * (abs(w1) + 1)

    lo, hi = -10.0, 10.0
    for _ in range(8):
        grid = np.linspace(lo, hi, 2001)
        best = grid[np.argmin([obj(g) for g in grid])]
        step = grid[1] - grid[0]
        lo, hi = best - 2 * step, best + 2 * step
    cons = LinearConstraints(eq_matrix=[[0.0, 1.0]], eq_rhs=[1.0])
    sol = solve_weighted_l1(np.eye(2), [3.0, 0.5], [1.0, 1.0], 1.0, cons)
    assert abs(sol.w[0] - best) < 1e-6
    assert sol.objective <= obj(best) + 1e-12


# -- soft-threshold oracle on orthonormal designs --------------------------------


def test_orthonormal_soft_threshold_1000_cases():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 9))
        m = n + int(rng.integers(0, 4))
        q, _ = np.linalg.qr(rng.normal(size=(m, n)))
        y = rng.normal(scale=3, size=m)
        u = rng.uniform(0, 2, size=n)
        u[rng.random(n) < 0.2] = 0.0
        lam = float(rng.uniform(0.05, 2))
        sol = solve_weighted_l1(q, y, u, lam)
        worst = max(worst, float(np.max(np.abs(sol.w - soft_threshold(q.T @ y, lam * u)))))
    assert worst <= 1e-6


def test_orthonormal_near_threshold_cases():
    # Coordinates within 1e-4 relative of their threshold; the interior-point
    # gap test alone leaves errors near 1e-4 here.
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 12))
        q, _ = np.linalg.qr(rng.normal(size=(n + int(rng.integers(0, 4)), n)))
        y = rng.normal(scale=3, size=q.shape[0])
        lam = float(rng.uniform(0.05, 2))
        z = q.T @ y
        u = np.abs(z) / lam * (1 + rng.normal(scale=1e-4, size=n))
        mask = rng.random(n) < 0.5
        u[mask] = rng.uniform(0, 2, size=int(mask.sum()))
        worst = max(worst, float(np.max(np.abs(solve_weighted_l1(q, y, u, lam).w - soft_threshold(z, lam * u)))))
    assert worst <= 1e-6


@given(
    st.lists(st.floats(-50, 50), min_size=1, max_size=6),
    st.floats(0.01, 10),
)
def test_soft_threshold_property(z, lam):
    z = np.array(z)
    sol = solve_weighted_l1(np.eye(z.size), z, np.ones(z.size), lam)
    np.testing.assert_allclose(sol.w, soft_threshold(z, lam), atol=1e-6 * (1 + np.max(np.abs(z))))


# -- general instances -------------------------------------------------------------


def test_kkt_on_100_random_instances():
    rng = np.random.default_rng(2)
    for _ in range(100):
        m, n = int(rng.integers(3, 30)), int(rng.integers(2, 40))
        phi = rng.normal(size=(m, n)) * rng.uniform(0.1, 10, size=n)
        y = rng.normal(size=m) * 5
        u = rng.uniform(0, 3, size=n)
        lam = float(rng.uniform(0.01, 5))
        sol = solve_weighted_l1(phi, y, u, lam)
        scale = 1.0 + float(np.max(np.abs(phi.T @ y)))
        assert kkt_residual(phi, y, u, lam, sol.w) <= 1e-5 * scale
        assert sol.objective <= weighted_l1_objective(phi, y, u, lam, np.zeros(n)) + 1e-12


def test_matches_split_qp_oracle():
    rng = np.random.default_rng(3)
    for _ in range(20):
        m, n = 12, 8
        phi = rng.normal(size=(m, n))
        y = rng.normal(size=m)
        u = rng.uniform(0.2, 2, size=n)
        lam = 0.3
        sol = solve_weighted_l1(phi, y, u, lam)
        _, f_ref = split_oracle(phi, y, u, lam)
        assert sol.objective <= f_ref + 1e-9 * (1 + abs(f_ref))


def test_constrained_matches_oracle_and_feasible():
    rng = np.random.default_rng(4)
    for _ in range(10):
        m, n = 15, 6
        phi = rng.normal(size=(m, n))
        y = rng.normal(size=m) * 2
        u = np.ones(n)
        A = rng.normal(size=(1, n))
        b = np.array([0.5])
        cons = LinearConstraints.bounds(n, nonnegative=[0, 1, 2])
        cons = LinearConstraints(A, b, cons.ineq_matrix, cons.ineq_rhs)
        sol = solve_weighted_l1(phi, y, u, 0.2, cons)
        eq, ineq = cons.violation(sol.w)
        assert eq <= 1e-8 and ineq <= 1e-8
        _, f_ref = split_oracle(phi, y, u, 0.2, A, b, cons.ineq_matrix, cons.ineq_rhs)
        assert sol.objective <= f_ref + 1e-7 * (1 + abs(f_ref))


def test_nonnegativity_holds_exactly_enough():
    rng = np.random.default_rng(5)
    phi = rng.normal(size=(20, 10))
    y = phi @ np.array([-3, 2, 0, 0, -1, 0, 0, 0, 1, 0.0]) + 0.1 * rng.normal(size=20)
    cons = LinearConstraints.bounds(10, nonnegative=range(10))
    sol = solve_weighted_l1(phi, y, np.ones(10), 0.5, cons)
    assert np.min(sol.w) >= -1e-8
    assert sol.objective <= weighted_l1_objective(phi, y, np.ones(10), 0.5, np.zeros(10))


def test_infeasible_status():
    cons = LinearConstraints(ineq_matrix=[[1.0, 0.0], [-1.0, 0.0]], ineq_rhs=[-1.0, -1.0])
    sol = solve_weighted_l1(np.eye(2), [1.0, 1.0], [1.0, 1.0], 1.0, cons)
    assert sol.status == "infeasible"
    assert np.isnan(sol.objective)


def test_rank_deficient_min_norm():
    phi = np.array([[1.0, 1.0], [1.0, 1.0]])
    sol = solve_weighted_l1(phi, [2.0, 2.0], [0.0, 0.0], 1.0)
    np.testing.assert_allclose(sol.w, [1.0, 1.0], atol=1e-12)


def test_zero_column_stays_zero():
    phi = np.array([[1.0, 0.0], [0.0, 0.0]])
    sol = solve_weighted_l1(phi, [3.0, 1.0], [1.0, 1.0], 1.0)
    np.testing.assert_allclose(sol.w, [2.0, 0.0], atol=1e-10)


@pytest.mark.parametrize(
    "phi, y, u, lam",
    [
        (np.eye(2), [1.0], [1.0, 1.0], 1.0),
        (np.eye(2), [1.0, 1.0], [1.0], 1.0),
        (np.eye(2), [1.0, 1.0], [-1.0, 1.0], 1.0),
        (np.eye(2), [1.0, 1.0], [1.0, 1.0], 0.0),
    ],
)
def test_input_validation(phi, y, u, lam):
    with pytest.raises(ValueError):
        solve_weighted_l1(phi, y, u, lam)


def test_constraint_validation():
    with pytest.raises(ValueError):
        LinearConstraints(eq_matrix=[[1.0, 0.0]], eq_rhs=[1.0, 2.0])
    with pytest.raises(ValueError):
        LinearConstraints(eq_matrix=[[1.0, 0.0]])
    with pytest.raises(ValueError):
        solve_weighted_l1(np.eye(2), [1.0, 1.0], [1.0, 1.0], 1.0, LinearConstraints([[1.0, 0, 0]], [0.0]))


def test_solve_gram_agrees_with_design_form():
    rng = np.random.default_rng(6)
    phi, y = rng.normal(size=(10, 5)), rng.normal(size=10)
    u = rng.uniform(0.5, 1.5, 5)
    a = solve_weighted_l1(phi, y, u, 0.4)
    b = solve_gram(phi.T @ phi, phi.T @ y, float(y @ y), 0.4 * u)
    np.testing.assert_allclose(a.w, b.w, atol=1e-12)
    assert a.objective == pytest.approx(weighted_l1_objective(phi, y, u, 0.4, a.w), rel=1e-12)
