import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("ci", deadline=None, max_examples=200)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def assert_cost_monotone(trace):
    """Recorded cost never rises by more than 1e-8 * (1 + |cost|) per step."""
    for a, b in zip(trace, trace[1:]):
        assert b <= a + 1e-8 * (1.0 + abs(a)), (a, b)


@pytest.fixture(scope="session")
def paper_repressilator():
    """Noiseless repressilator with the published constants: (series, truth, problems)."""
    from sparseid.dictionary import build_hill_spec, evaluate
    from sparseid.rng import Xoshiro256
    from sparseid.sim import RepressilatorParams, repressilator_truth, simulate_repressilator

    params = RepressilatorParams()
    ts = simulate_repressilator(params, Xoshiro256(1).uniform_open(0.0, 1.0, 6))
    spec = build_hill_spec(6, 4)
    problems = [evaluate(spec, ts, i) for i in range(6)]
    return ts, repressilator_truth(params), problems


# -- cost-trace guard for every identify() call made by the suite ---------------------

import functools  # noqa: E402

import sparseid  # noqa: E402
import sparseid.bench  # noqa: E402
import sparseid.cli  # noqa: E402
import sparseid.sbl  # noqa: E402

IDENTIFY_TRACES: list[list[float]] = []
ACCEPTANCE_LINES: dict[int, str] = {}
_identify = sparseid.sbl.identify


@functools.wraps(_identify)
def _recording_identify(*args, **kwargs):
    res = _identify(*args, **kwargs)
    IDENTIFY_TRACES.append(list(res.cost_trace))
    return res


for _mod in (sparseid, sparseid.sbl, sparseid.bench, sparseid.cli):
    _mod.identify = _recording_identify


def trace_violations(traces):
    """Steps where the recorded cost rose by more than 1e-8 * (1 + |cost|)."""
    return [(a, b) for t in traces for a, b in zip(t, t[1:]) if b > a + 1e-8 * (1.0 + abs(a))]


@pytest.fixture(autouse=True)
def _cost_trace_guard():
    start = len(IDENTIFY_TRACES)
    yield
    bad = trace_violations(IDENTIFY_TRACES[start:])
    assert not bad, f"cost trace rose: {bad[:3]}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
    terminalreporter.write_line(
        f"identify() runs recorded: {len(IDENTIFY_TRACES)}, cost-trace violations: "
        f"{len(trace_violations(IDENTIFY_TRACES))}"
    )
