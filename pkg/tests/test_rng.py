import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sparseid.rng import MASK64, Xoshiro256, derive_seed, snr_key, splitmix64

# Produced by the reference C implementations (splitmix64.c, xoshiro256starstar.c)
# with the state seeded from four consecutive splitmix64 outputs starting at 12345.
C_REFERENCE_12345 = [
    13720838825685603483,
    2398916695208396998,
    17770384849984869256,
    891717726879801395,
    10241316046318454344,
]


def test_splitmix64_reference():
    assert splitmix64(0) == 16294208416658607535


def test_xoshiro_matches_c_reference():
    g = Xoshiro256(12345)
    assert [g.next_u64() for _ in range(5)] == C_REFERENCE_12345


def test_same_seed_same_stream():
    a, b = Xoshiro256(99), Xoshiro256(99)
    np.testing.assert_array_equal(a.normal(101), b.normal(101))


def test_derive_seed_prefix_stable():
    # Appending a key gives a new stream; existing ones are untouched.
    assert derive_seed(5, 1) == derive_seed(5, 1)
    assert derive_seed(5, 1) != derive_seed(5, 1, 0)
    assert derive_seed(5, 1, 2) != derive_seed(5, 2, 1)


def test_snr_key_distinct_and_nonnegative():
    keys = {snr_key(s) for s in (-10, 0, 0.001, 5, 25)}
    assert len(keys) == 5
    assert min(keys) > 0


@given(st.integers(min_value=0, max_value=MASK64))
def test_unit_intervals(seed):
    g = Xoshiro256(seed)
    u = g.random(50)
    assert np.all((u >= 0) & (u < 1))
    v = g.uniform_open(0.0, 1.0, 50)
    assert np.all((v > 0) & (v < 1))


@given(st.integers(min_value=0, max_value=2**32), st.integers(1, 40), st.data())
def test_choice_distinct(seed, n, data):
    k = data.draw(st.integers(0, n))
    picks = Xoshiro256(seed).choice(n, k)
    assert len(set(picks.tolist())) == k
    assert np.all((picks >= 0) & (picks < n))


def test_choice_rejects_bad_k():
    with pytest.raises(ValueError):
        Xoshiro256(0).choice(3, 4)


def test_normal_moments():
    z = Xoshiro256(7).normal(40000)
    assert abs(z.mean()) < 0.02
    assert abs(z.std() - 1.0) < 0.02
    assert math.isclose(Xoshiro256(7).normal(4, scale=3.0)[0], 3.0 * z[0])
