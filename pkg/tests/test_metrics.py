import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sparseid.metrics import rnmse, score, snr_db, support_metrics, support_of

W = np.array([0.0, 2.0, -1.0, 0.0, 3.0])


def test_rnmse_examples():
    assert rnmse(W, W) == 0.0
    assert rnmse(np.zeros(5), W) == 1.0
    assert rnmse(2 * W, W) == 1.0


@given(st.lists(st.floats(-100, 100), min_size=5, max_size=5))
def test_rnmse_error_form(e):
    e = np.array(e)
    assert rnmse(W + e, W) == pytest.approx(np.linalg.norm(e) / np.linalg.norm(W), rel=1e-12, abs=1e-15)


def test_rnmse_errors():
    with pytest.raises(ValueError):
        rnmse(np.ones(2), np.zeros(2))
    with pytest.raises(ValueError):
        rnmse(np.ones(2), np.ones(3))


def test_support_examples():
    assert support_metrics(W, W) == (1.0, 1.0, True)
    assert support_metrics(np.zeros(5), W) == (1.0, 0.0, False)
    truth = np.array([1.0, 1, 1, 1, 1, 0])
    est = np.array([1.0, 1, 1, 1, 1, 1])
    p, r, exact = support_metrics(est, truth)
    assert p == pytest.approx(5 / 6) and r == 1.0 and not exact


def test_support_energy_threshold():
    w = np.array([1.0, 0.009, 0.011])
    np.testing.assert_array_equal(support_of(w), [True, False, True])
    np.testing.assert_array_equal(support_of(w, 0), [True, True, True])


def test_score_bundle():
    s = score(W * 1.1, W)
    assert s.exact_support and s.rnmse == pytest.approx(0.1)


def test_snr_db():
    assert snr_db([3.0, 4.0], [0.5, 0.0]) == pytest.approx(20.0)
