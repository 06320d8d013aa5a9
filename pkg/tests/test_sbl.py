import json
import math
import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import assert_cost_monotone
from sparseid.baselines import lasso
from sparseid.dictionary import RegressionProblem, hill_column
from sparseid.sbl import (
    LAMBDA_FLOOR,
    Hyperprior,
    SblConfig,
    estimate_lambda,
    identify,
    marginal_cost,
    posterior_moments,
    reweight_diagonal,
    update_reweights,
)
from sparseid.weighted_l1 import LinearConstraints


def literal_C(phi, gamma, lam):
    return lam * np.eye(phi.shape[0]) + phi @ np.diag(gamma) @ phi.T


# -- hyperprior ---------------------------------------------------------------


def test_hyperprior_derivatives():
    g = np.array([0.5, 2.0])
    np.testing.assert_array_equal(Hyperprior().dp(g), 0.0)
    np.testing.assert_allclose(Hyperprior("log_penalty", 2.0).dp(g), [4.0, 1.0])
    np.testing.assert_allclose(Hyperprior("linear_penalty", 0.3).dp(g), [0.3, 0.3])
    np.testing.assert_allclose(Hyperprior("log_penalty", 1.0).p(np.array([0.0, math.e])), [0.0, 1.0])
    with pytest.raises(ValueError):
        Hyperprior("cauchy")
    with pytest.raises(ValueError):
        Hyperprior("flat", -1.0)


# -- posterior moments ------------------------------------------------------------


def test_posterior_zero_gamma():
    mean, cov = posterior_moments(np.ones((3, 2)), np.ones(3), np.zeros(2), 1.0)
    assert not mean.any() and not cov.any()


def test_posterior_scalar_example():
    mean, cov = posterior_moments([[1.0]], [2.0], [1.0], 1.0)
    assert mean[0] == pytest.approx(1.0)
    assert cov[0, 0] == pytest.approx(0.5)


def test_posterior_literal_woodbury_random_4x6():
    rng = np.random.default_rng(0)
    phi, y = rng.normal(size=(4, 6)), rng.normal(size=4)
    gamma, lam = rng.uniform(0.1, 2, 6), 0.3
    # Weight-space form with explicit inverses.
    sigma = np.linalg.inv(np.diag(1 / gamma) + phi.T @ phi / lam)
    mean_ref = sigma @ phi.T @ y / lam
    for form in ("direct", "dual", "auto"):
        mean, cov = posterior_moments(phi, y, gamma, lam, form)
        np.testing.assert_allclose(mean, mean_ref, atol=1e-8)
        np.testing.assert_allclose(cov, sigma, atol=1e-8)


@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2**31), st.floats(1e-3, 10))
def test_posterior_forms_agree_and_psd(m, n, seed, lam):
    rng = np.random.default_rng(seed)
    phi, y = rng.normal(size=(m, n)), rng.normal(size=m)
    gamma = rng.uniform(0, 3, n) * (rng.random(n) < 0.7)
    m1, c1 = posterior_moments(phi, y, gamma, lam, "direct")
    m2, c2 = posterior_moments(phi, y, gamma, lam, "dual")
    scale = 1 + np.max(np.abs(m1))
    np.testing.assert_allclose(m1, m2, atol=1e-8 * scale)
    np.testing.assert_allclose(c1, c2, atol=1e-8 * (1 + np.max(np.abs(c1))))
    np.testing.assert_array_equal(c1, c1.T)
    if np.any(c1):
        assert np.linalg.eigvalsh(c1)[0] >= -1e-10 * np.linalg.norm(c1)


def test_posterior_rejects_bad_input():
    with pytest.raises(ValueError):
        posterior_moments(np.eye(2), [1.0, np.nan], [1.0, 1.0], 1.0)
    with pytest.raises(ValueError):
        posterior_moments(np.eye(2), [1.0, 1.0], [-1.0, 1.0], 1.0)


# -- cost -------------------------------------------------------------------------


def test_cost_examples():
    y = np.array([1.0, -2.0, 0.5])
    assert marginal_cost(np.ones((3, 2)), y, np.zeros(2), 0.5) == pytest.approx(3 * math.log(0.5) + (y @ y) / 0.5)
    assert marginal_cost([[1.0]], [0.0], [3.0], 1.0) == pytest.approx(math.log(4.0))


def test_cost_matches_literal_determinant():
    rng = np.random.default_rng(1)
    for m, n in [(5, 3), (4, 9), (6, 6)]:
        phi, y = rng.normal(size=(m, n)), rng.normal(size=m)
        gamma = rng.uniform(0, 2, n)
        gamma[0] = 0.0
        C = literal_C(phi, gamma, 0.2)
        ref = np.linalg.slogdet(C)[1] + y @ np.linalg.solve(C, y)
        hp = Hyperprior("linear_penalty", 0.7)
        assert marginal_cost(phi, y, gamma, 0.2, hp) == pytest.approx(ref + 0.7 * gamma.sum(), rel=1e-10)


# -- reweighting ------------------------------------------------------------------


def test_reweight_scalar_examples():
    assert update_reweights([[1.0]], 1.0, [1.0], [0.0])[0] == pytest.approx(1.0)
    assert update_reweights([[1.0]], 1.0, [1.0], [3.0])[0] == pytest.approx(0.5)


def test_reweight_matches_gradient_formula_3x5():
    rng = np.random.default_rng(2)
    phi = rng.normal(size=(3, 5))
    u_prev = rng.uniform(0.5, 2, 5)
    w = rng.normal(size=5)
    w[3] = 0.0
    lam = 0.4
    hp = Hyperprior("linear_penalty", 0.25)
    gamma = np.abs(w) / u_prev
    Cinv = np.linalg.inv(literal_C(phi, gamma, lam))
    ref = np.sqrt(np.diag(phi.T @ Cinv @ phi) + 0.25)
    np.testing.assert_allclose(update_reweights(phi, lam, u_prev, w, hp), ref, rtol=1e-10)


def test_reweight_diagonal_large_support_uses_direct_form():
    rng = np.random.default_rng(3)
    phi = rng.normal(size=(4, 8))
    gamma = rng.uniform(0.1, 1, 8)
    ref = np.diag(phi.T @ np.linalg.inv(literal_C(phi, gamma, 0.1)) @ phi)
    np.testing.assert_allclose(reweight_diagonal(phi, gamma, 0.1), ref, rtol=1e-9)


def test_reweight_inactive_and_errors():
    u = update_reweights(np.eye(3), 1.0, [1.0, 0.0, 1.0], [1.0, 5.0, 0.0])
    assert u[1] == 0.0 and u[0] > 0 and u[2] > 0
    with pytest.raises(ValueError):
        update_reweights(np.eye(2), 0.0, [1.0, 1.0], [0.0, 0.0])
    with pytest.raises(ValueError):
        update_reweights(np.eye(2), 1.0, [1.0, 1.0], [np.inf, 0.0])


def test_reweight_step_scales_linearly_in_n():
    rng = np.random.default_rng(4)
    M, k = 200, 8
    times = []
    for N in (800, 1600, 3200):
        phi = rng.normal(size=(M, N))
        gamma = np.zeros(N)
        gamma[:k] = 1.0
        best = math.inf
        for _ in range(15):
            t0 = time.perf_counter()
            reweight_diagonal(phi, gamma, 0.1)
            best = min(best, time.perf_counter() - t0)
        times.append(best)
    assert times[1] / times[0] < 3.0
    assert times[2] / times[1] < 3.0


# -- noise level ------------------------------------------------------------------


def test_estimate_lambda_noiseless(paper_repressilator):
    _, _, problems = paper_repressilator
    for p in problems:
        assert estimate_lambda(p) <= LAMBDA_FLOOR * (p.y @ p.y) / p.y.size * (1 + 1e-12)
    rng = np.random.default_rng(5)
    phi = rng.normal(size=(40, 5))
    y = phi @ rng.normal(size=5)
    assert estimate_lambda((phi, y)) <= 1e-10 * (y @ y) / 40


def test_estimate_lambda_pure_noise():
    rng = np.random.default_rng(6)
    phi = rng.normal(size=(300, 4))
    xi = rng.normal(size=300)
    xi -= phi @ np.linalg.lstsq(phi, xi, rcond=None)[0]
    assert estimate_lambda((phi, xi)) == pytest.approx(xi @ xi / 300, rel=0.2)


def test_estimate_lambda_known_variance():
    rng = np.random.default_rng(7)
    hits = 0
    for _ in range(100):
        phi = rng.normal(size=(200, 10))
        y = phi @ rng.normal(size=10) + rng.normal(scale=0.1, size=200)
        hits += 0.005 <= estimate_lambda((phi, y)) <= 0.02
    assert hits >= 90


def test_estimate_lambda_needs_two_rows():
    with pytest.raises(ValueError):
        estimate_lambda((np.ones((1, 2)), np.ones(1)))


# -- identify ---------------------------------------------------------------------


def test_noiseless_repressilator_state1(paper_repressilator):
    _, _, problems = paper_repressilator
    res = identify(problems[0], SblConfig(lam=1e-6))
    assert list(res.support) == [0, hill_column(6, 5, 3)]
    assert res.support_labels == ["x1", "1/(1+x6^3)"]
    np.testing.assert_allclose(res.w_hat[res.support], [-0.3, 4.0], atol=1e-3)
    assert_cost_monotone(res.cost_trace)
    assert res.status == "converged"


def test_zero_data_gives_zero_after_first_iteration():
    rng = np.random.default_rng(8)
    res = identify((rng.normal(size=(10, 4)), np.zeros(10)), SblConfig(lam=0.1))
    assert not res.w_hat.any()
    assert res.iterations == 1
    assert res.status == "all_pruned"


def test_single_column_equal_to_y():
    y = np.array([1.0, -2.0, 0.5, 3.0])
    res = identify((y[:, None], y), SblConfig(lam=1e-4))
    assert list(res.support) == [0]
    assert res.w_hat[0] == pytest.approx(1.0, abs=1e-3)
    # On one column the fixed point solves w = 1 - lam u / s with u = sqrt(s / (lam + gamma s)).
    s = y @ y
    u = res.u[0]
    assert res.w_hat[0] == pytest.approx(1 - 1e-4 * u / s, abs=1e-9)
    assert_cost_monotone(res.cost_trace)


def test_first_iteration_is_lasso():
    rng = np.random.default_rng(9)
    for _ in range(5):
        phi, y = rng.normal(size=(15, 25)), rng.normal(size=15)
        cfg = SblConfig(lam=0.2, max_outer_iter=1, prune_threshold=1e-300)
        np.testing.assert_allclose(identify((phi, y), cfg).w_hat, lasso(phi, y, 0.2).w, atol=1e-8)


def test_reweighting_fixed_point_and_pruned_zero():
    rng = np.random.default_rng(10)
    phi = rng.normal(size=(40, 30))
    w = np.zeros(30)
    w[[2, 7, 19]] = [1.5, -2.0, 0.8]
    y = phi @ w + 0.01 * rng.normal(size=40)
    res = identify((phi, y), SblConfig(lam=1e-4))
    assert res.status == "converged"
    assert_cost_monotone(res.cost_trace)
    assert res.prune_history[-1] == 0 and res.prune_history[-2] == 0
    S = res.support
    u1, u0 = res.u_history[-1][S], res.u_history[-2][S]
    assert np.max(np.abs(u1 - u0) / u0) <= 1e-4
    off = np.setdiff1d(np.arange(30), S)
    assert np.all(res.w_hat[off] == 0.0)
    assert set(S) == {2, 7, 19}


@pytest.mark.parametrize("hp", [Hyperprior("log_penalty", 1e-3), Hyperprior("linear_penalty", 0.5)])
def test_penalised_priors_monotone(hp):
    rng = np.random.default_rng(11)
    phi = rng.normal(size=(30, 20))
    y = phi[:, 3] * 2 - phi[:, 9] + 0.05 * rng.normal(size=30)
    res = identify((phi, y), SblConfig(lam=0.01, hyperprior=hp))
    assert_cost_monotone(res.cost_trace)
    assert {3, 9} <= set(res.support)


@given(st.integers(0, 2**31), st.floats(1e-4, 1.0), st.booleans())
def test_cost_monotone_property(seed, lam, normalize):
    rng = np.random.default_rng(seed)
    m, n = int(rng.integers(4, 20)), int(rng.integers(2, 25))
    phi = rng.normal(size=(m, n)) * rng.uniform(0.2, 5, size=n)
    y = rng.normal(size=m)
    res = identify((phi, y), SblConfig(lam=lam, normalize=normalize, max_outer_iter=10))
    assert_cost_monotone(res.cost_trace)
    assert np.all(np.isfinite(res.cost_trace))
    assert set(np.flatnonzero(res.w_hat)) == set(res.support)


def test_nonnegative_constraint():
    rng = np.random.default_rng(12)
    phi = rng.normal(size=(30, 10))
    y = phi @ np.array([2, -1, 0, 0, 1, 0, 0, 0, 0, 0.0]) + 0.05 * rng.normal(size=30)
    res = identify((phi, y), SblConfig(lam=0.01), LinearConstraints.bounds(10, nonnegative=range(10)))
    assert np.all(res.w_hat >= -1e-8)
    assert 1 not in res.support
    assert_cost_monotone(res.cost_trace)


def test_equality_constrained_column_not_pruned():
    rng = np.random.default_rng(13)
    phi = rng.normal(size=(30, 6))
    y = phi[:, 0] * 3 + 0.01 * rng.normal(size=30)
    res = identify((phi, y), SblConfig(lam=0.01), LinearConstraints.bounds(6, fixed={4: 0.05}))
    assert 4 in res.support
    assert res.w_hat[4] == pytest.approx(0.05, abs=1e-8)
    assert_cost_monotone(res.cost_trace)


def test_infeasible_constraints_propagate():
    cons = LinearConstraints(ineq_matrix=[[1.0, 0.0], [-1.0, 0.0]], ineq_rhs=[-1.0, -1.0])
    res = identify((np.eye(2), np.ones(2)), SblConfig(lam=0.1), cons)
    assert res.status == "infeasible"
    assert not res.w_hat.any()


def test_result_json_and_labels():
    phi = np.eye(3)
    prob = RegressionProblem(np.array([2.0, 0.0, 0.0]), phi, ("a", "b", "c"), "x1:finite_difference")
    res = identify(prob, SblConfig(lam=0.01))
    d = json.loads(res.to_json())
    assert d["support_labels"] == ["a"]
    assert d["target"] == "x1:finite_difference"
    assert len(d["posterior_std"]) == 1
    assert d["cost_trace"] == res.cost_trace


def test_config_validation():
    for kwargs in ({"lam": 0.0}, {"lam": "guess"}, {"prune_threshold": 1.0}, {"max_outer_iter": 0}):
        with pytest.raises(ValueError):
            SblConfig(**kwargs)
