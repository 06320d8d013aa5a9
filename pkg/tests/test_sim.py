import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sparseid.dictionary import build_hill_spec, build_kuramoto_spec, evaluate, hill_column, kuramoto_column
from sparseid.metrics import snr_db
from sparseid.sim import (
    PAPER_ALPHA,
    PAPER_BETA,
    PAPER_GAMMA,
    KuramotoParams,
    NoiseSpec,
    RepressilatorParams,
    SimulationError,
    inject_noise_at_snr,
    kuramoto_truth,
    repressilator_truth,
    sample_benchmark_instance,
    simulate_kuramoto,
    simulate_repressilator,
)


def reference_repressilator(x0, steps, dt=1.0):
    """Straight-line transcription of the six update equations."""
    a1, a2, a3 = PAPER_ALPHA
    b1, b2, b3 = PAPER_BETA
    g1, g2, g3, g4, g5, g6 = PAPER_GAMMA
    x1, x2, x3, x4, x5, x6 = x0
    out = [list(x0)]
    for _ in range(steps):
        x1, x2, x3, x4, x5, x6 = (
            x1 + dt * (-g1 * x1 + a1 / (1 + x6**3)),
            x2 + dt * (-g2 * x2 + a2 / (1 + x4**3)),
            x3 + dt * (-g3 * x3 + a3 / (1 + x5**3)),
            x4 + dt * (-g4 * x4 + b1 * x1),
            x5 + dt * (-g5 * x5 + b2 * x2),
            x6 + dt * (-g6 * x6 + b3 * x3),
        )
        out.append([x1, x2, x3, x4, x5, x6])
    return np.array(out)


# -- repressilator --------------------------------------------------------------


def test_first_step_from_zero():
    ts = simulate_repressilator(RepressilatorParams(steps=1), np.zeros(6))
    np.testing.assert_array_equal(ts.states[1], [4.0, 3.0, 5.0, 0.0, 0.0, 0.0])


def test_default_protocol_shape():
    ts = simulate_repressilator(RepressilatorParams(), np.full(6, 0.5))
    assert ts.n_samples == 51
    assert ts.times[0] == 0.0 and ts.times[-1] == 50.0


def test_matches_reference_iterator():
    x0 = [0.1, 0.7, 0.3, 0.9, 0.2, 0.5]
    ts = simulate_repressilator(RepressilatorParams(steps=10), x0)
    np.testing.assert_allclose(ts.states, reference_repressilator(x0, 10), atol=1e-12, rtol=0)


def test_closed_loop(paper_repressilator):
    _, truth, problems = paper_repressilator
    for w, p in zip(truth, problems):
        assert np.linalg.norm(p.phi @ w - p.y) <= 1e-10 * np.linalg.norm(p.y)


def test_truth_layout():
    truth = repressilator_truth(RepressilatorParams())
    assert np.count_nonzero(truth[3]) == 2
    assert truth[3][3] == -0.2 and truth[3][0] == 1.4
    assert truth[0][0] == -0.3 and truth[0][hill_column(6, 5, 3)] == 4.0
    assert all(w.size == 54 for w in truth)


def test_rejects_negative_init():
    with pytest.raises(ValueError):
        simulate_repressilator(RepressilatorParams(), [-0.1, 0, 0, 0, 0, 0])


def test_blow_up_reports_step():
    params = RepressilatorParams(dt=100.0, steps=400)
    with pytest.raises(SimulationError) as err:
        simulate_repressilator(params, np.full(6, 0.5))
    assert 1 <= err.value.step <= 400


def test_process_noise_and_clipping():
    params = RepressilatorParams()
    x0 = np.full(6, 0.5)
    clean = simulate_repressilator(params, x0)
    noisy = simulate_repressilator(params, x0, NoiseSpec("snr_db", 25.0, seed=3))
    clipped = simulate_repressilator(params, x0, NoiseSpec("snr_db", 25.0, seed=3), clip_nonnegative=True)
    assert not np.array_equal(clean.states, noisy.states)
    assert clipped.states.min() >= 0.0
    again = simulate_repressilator(params, x0, NoiseSpec("snr_db", 25.0, seed=3))
    np.testing.assert_array_equal(noisy.states, again.states)


def test_variance_noise_enters_inside_bracket():
    params = RepressilatorParams(steps=1, dt=0.5)
    x0 = np.full(6, 0.5)
    clean = simulate_repressilator(params, x0).states[1]
    noisy = simulate_repressilator(params, x0, NoiseSpec("variance", 4.0, seed=9)).states[1]
    from sparseid.rng import Xoshiro256

    xi = 2.0 * Xoshiro256(9).normal(6)
    np.testing.assert_allclose(noisy - clean, 0.5 * xi, atol=1e-14)


@pytest.mark.parametrize("kwargs", [{"alpha": (0.0, 1.0, 1.0)}, {"hill_n": (5, 3, 3)}, {"dt": 0.0},
                                    {"gamma": (1.0,) * 5}])
def test_params_validation(kwargs):
    with pytest.raises(ValueError):
        RepressilatorParams(**kwargs)


def test_params_round_trip():
    p = RepressilatorParams(alpha=(4.1, 3.0, 5.0), seed=4)
    assert RepressilatorParams.from_dict(json.loads(json.dumps(p.to_dict()))) == p
    k = KuramotoParams(2, [1.0, 2.0], [[0, 1.0], [0, 0]])
    k2 = KuramotoParams.from_dict(json.loads(json.dumps(k.to_dict())))
    np.testing.assert_array_equal(k2.weights, k.weights)


def test_noise_spec_validation():
    with pytest.raises(ValueError):
        NoiseSpec("variance", 0.0)
    with pytest.raises(ValueError):
        NoiseSpec("snr_db", math.inf)
    with pytest.raises(ValueError):
        NoiseSpec("colored", 1.0)


# -- Kuramoto ---------------------------------------------------------------------


def test_kuramoto_equal_phases_step():
    p = KuramotoParams(3, [1.0, -2.0, 0.5], np.array([[0, 3, 1], [2, 0, 0], [0, 4, 0.0]]), steps=1)
    ts = simulate_kuramoto(p, np.full(3, 1.0))
    np.testing.assert_allclose(ts.states[1], 1.0 + 0.1 * np.array([1.0, -2.0, 0.5]))


def test_kuramoto_two_node_example():
    p = KuramotoParams(2, [0.0, 0.0], [[0, 1.0], [0, 0]], steps=1)
    ts = simulate_kuramoto(p, [0.0, math.pi / 2])
    assert ts.states[1, 0] == pytest.approx(0.1)


def test_kuramoto_protocol_and_unwrapped():
    p = KuramotoParams(2, [30.0, 0.0], np.zeros((2, 2)))
    ts = simulate_kuramoto(p, [6.0, 0.0])
    assert ts.n_samples == 451 and ts.times[-1] == pytest.approx(45.0)
    assert ts.states[-1, 0] == pytest.approx(6.0 + 45 * 30.0)


def test_kuramoto_init_range():
    p = KuramotoParams(2, [0.0, 0.0], np.zeros((2, 2)))
    with pytest.raises(ValueError):
        simulate_kuramoto(p, [0.0, 2 * math.pi])


def test_kuramoto_self_coupling_rejected():
    with pytest.raises(ValueError):
        KuramotoParams(2, [0.0, 0.0], np.eye(2))


def test_kuramoto_closed_loop():
    inst = sample_benchmark_instance("kuramoto", 11, n=6)
    for i, w in enumerate(inst.truth):
        prob = evaluate(build_kuramoto_spec(6, i), inst.series, i)
        assert np.linalg.norm(prob.phi @ w - prob.y) <= 1e-10 * np.linalg.norm(prob.y)


# -- benchmark instances ------------------------------------------------------------


@pytest.mark.parametrize("which", ["repressilator", "kuramoto"])
def test_instance_determinism(which):
    a = sample_benchmark_instance(which, 1234, n=8)
    b = sample_benchmark_instance(which, 1234, n=8)
    assert a.series.states.tobytes() == b.series.states.tobytes()
    assert a.to_json() == b.to_json()
    c = sample_benchmark_instance(which, 1235, n=8)
    assert c.series.states.tobytes() != a.series.states.tobytes()


def test_repressilator_instance_jitter():
    inst = sample_benchmark_instance("repressilator", 5)
    p = inst.params
    for got, ref in ((p.alpha, PAPER_ALPHA), (p.beta, PAPER_BETA), (p.gamma, PAPER_GAMMA)):
        ratio = np.array(got) / np.array(ref)
        assert np.all((ratio >= 0.9) & (ratio <= 1.1))
    assert inst.series.n_samples == 51
    assert np.all((inst.series.states[0] > 0) & (inst.series.states[0] < 1))


def test_kuramoto_instance_truth():
    n = 20
    inst = sample_benchmark_instance("kuramoto", 99, n=n)
    W = inst.params.weights
    assert np.count_nonzero(W) == round(0.1 * n * (n - 1))
    assert np.all(np.abs(W) <= 10)
    nonzero_total = 0
    for i, w in enumerate(inst.truth):
        sin_cols = [kuramoto_column(n, i, j) for j in range(n) if j != i]
        other = np.setdiff1d(np.arange(w.size - 1), sin_cols)
        assert not np.any(w[other])
        assert w[-1] == inst.params.omega[i]
        nonzero_total += np.count_nonzero(w[sin_cols])
    assert nonzero_total == np.count_nonzero(W)
    assert json.loads(inst.to_json())["truth"][0]["labels"][-1] == "1"


def test_unknown_system():
    with pytest.raises(ValueError):
        sample_benchmark_instance("lorenz", 0)


# -- noise injection -------------------------------------------------------------------


def test_snr_zero_and_twenty():
    s = np.arange(1.0, 11.0)
    xi, lam = inject_noise_at_snr(s, 0.0, 1)
    assert np.linalg.norm(xi) == pytest.approx(np.linalg.norm(s), rel=1e-14)
    assert lam == pytest.approx(xi @ xi / 10)
    xi, _ = inject_noise_at_snr(s, 20.0, 1)
    assert np.linalg.norm(xi) == pytest.approx(np.linalg.norm(s) / 10, rel=1e-14)


@given(
    st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=40).filter(lambda v: np.linalg.norm(v) > 1e-6),
    st.floats(-20, 60),
    st.integers(0, 2**63),
)
def test_realized_snr_exact(signal, target, seed):
    xi, _ = inject_noise_at_snr(np.array(signal), target, seed)
    assert abs(snr_db(np.array(signal), xi) - target) <= 1e-9


def test_zero_signal_rejected():
    with pytest.raises(ValueError):
        inject_noise_at_snr(np.zeros(4), 10.0, 0)


def test_truth_dimension_matches_dictionary():
    assert len(build_hill_spec(6, 4)) == repressilator_truth(RepressilatorParams())[0].size
    p = KuramotoParams(4, np.zeros(4), np.zeros((4, 4)))
    assert kuramoto_truth(p)[0].size == len(build_kuramoto_spec(4, 0))
