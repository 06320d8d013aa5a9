"""Benchmark systems: repressilator and Kuramoto network as discrete-time maps.

Random draws use :class:`sparseid.rng.Xoshiro256` so that instances are
identical across platforms.  A benchmark instance for ``(root, trial)`` is
drawn from the stream ``derive_seed(root, trial)``; noise for a given SNR and
state comes from ``derive_seed(root, trial, snr_key(snr), state)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .dictionary import TimeSeries, build_hill_spec, build_kuramoto_spec, hill_column, kuramoto_column
from .rng import Xoshiro256, derive_seed

# Published repressilator constants.
PAPER_ALPHA = (4.0, 3.0, 5.0)
PAPER_BETA = (1.4, 1.5, 1.6)
PAPER_GAMMA = (0.3, 0.4, 0.5, 0.2, 0.4, 0.6)
PAPER_HILL_N = (3, 3, 3)
# mRNA i is repressed by protein REPRESSOR[i] (x6, x4, x5).
REPRESSOR = (5, 3, 4)

REPRESSILATOR_PROTOCOL = {"dt": 1.0, "steps": 50, "jitter": 0.1, "hill_max": 4}
KURAMOTO_PROTOCOL = {"dt": 0.1, "steps": 450, "density": 0.1, "weight_range": 10.0, "omega_var": 10.0}


class SimulationError(RuntimeError):
    """The trajectory left the finite range; ``step`` is the failing step index."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


@dataclass(frozen=True)
class NoiseSpec:
    """Process noise: fixed variance, or calibrated to a per-state SNR in dB.

    In ``snr_db`` mode the standard deviation for state ``i`` is
    ``rms(f_i) / 10**(snr/20)`` with ``f_i`` the noiseless right-hand side
    along the noiseless trajectory from the same initial state.
    """

    mode: str
    value: float
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("variance", "snr_db"):
            raise ValueError("noise mode must be 'variance' or 'snr_db'")
        if self.mode == "variance" and not self.value > 0:
            raise ValueError("noise variance must be positive")
        if not math.isfinite(self.value):
            raise ValueError("noise level must be finite")


@dataclass(frozen=True)
class RepressilatorParams:
    alpha: tuple[float, float, float] = PAPER_ALPHA
    beta: tuple[float, float, float] = PAPER_BETA
    gamma: tuple[float, ...] = PAPER_GAMMA
    hill_n: tuple[int, int, int] = PAPER_HILL_N
    dt: float = 1.0
    steps: int = 50
    seed: int = 0

    def __post_init__(self):
        if len(self.alpha) != 3 or len(self.beta) != 3 or len(self.gamma) != 6 or len(self.hill_n) != 3:
            raise ValueError("repressilator needs 3 alphas, 3 betas, 6 gammas and 3 Hill coefficients")
        if min(*self.alpha, *self.beta, *self.gamma) <= 0:
            raise ValueError("all rates must be positive")
        if any(int(h) != h or not 1 <= h <= 4 for h in self.hill_n):
            raise ValueError("Hill coefficients must be integers in 1..4")
        if not self.dt > 0 or self.steps < 1:
            raise ValueError("need dt > 0 and steps >= 1")

    def to_dict(self) -> dict:
        return {
            "alpha": list(self.alpha), "beta": list(self.beta), "gamma": list(self.gamma),
            "hill_n": list(self.hill_n), "dt": self.dt, "steps": self.steps, "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RepressilatorParams":
        return cls(
            tuple(float(v) for v in d.get("alpha", PAPER_ALPHA)),
            tuple(float(v) for v in d.get("beta", PAPER_BETA)),
            tuple(float(v) for v in d.get("gamma", PAPER_GAMMA)),
            tuple(int(v) for v in d.get("hill_n", PAPER_HILL_N)),
            float(d.get("dt", 1.0)),
            int(d.get("steps", 50)),
            int(d.get("seed", 0)),
        )


@dataclass(frozen=True)
class KuramotoParams:
    n: int
    omega: np.ndarray
    weights: np.ndarray
    dt: float = 0.1
    steps: int = 450
    seed: int = 0

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float).reshape(-1)
        W = np.asarray(self.weights, dtype=float)
        if self.n < 2 or omega.size != self.n or W.shape != (self.n, self.n):
            raise ValueError("omega must have n entries and weights must be n x n")
        if np.any(np.diag(W) != 0):
            raise ValueError("self-coupling weights must be zero")
        if not self.dt > 0 or self.steps < 1:
            raise ValueError("need dt > 0 and steps >= 1")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "weights", W)

    def to_dict(self) -> dict:
        return {
            "n": self.n, "omega": self.omega.tolist(), "weights": self.weights.tolist(),
            "dt": self.dt, "steps": self.steps, "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KuramotoParams":
        return cls(int(d["n"]), np.array(d["omega"], dtype=float), np.array(d["weights"], dtype=float),
                   float(d.get("dt", 0.1)), int(d.get("steps", 450)), int(d.get("seed", 0)))


# ---------------------------------------------------------------------------
# Right-hand sides
# ---------------------------------------------------------------------------


def repressilator_rhs(params: RepressilatorParams, x: np.ndarray) -> np.ndarray:
    g = params.gamma
    f = np.empty(6)
    for i in range(3):
        rep = x[REPRESSOR[i]]
        f[i] = -g[i] * x[i] + params.alpha[i] / (1.0 + rep ** params.hill_n[i])
        f[3 + i] = -g[3 + i] * x[3 + i] + params.beta[i] * x[i]
    return f


def kuramoto_rhs(params: KuramotoParams, phase: np.ndarray) -> np.ndarray:
    diff = phase[None, :] - phase[:, None]  # diff[i, j] = phase_j - phase_i
    return params.omega + np.sum(params.weights * np.sin(diff), axis=1)


def _iterate(rhs, x0: np.ndarray, dt: float, steps: int, noise_sd: np.ndarray | None, rng,
             clip_nonnegative: bool = False) -> np.ndarray:
    n = x0.size
    X = np.empty((steps + 1, n))
    X[0] = x0
    with np.errstate(all="ignore"):
        for k in range(steps):
            f = rhs(X[k])
            if noise_sd is not None:
                f = f + noise_sd * rng.normal(n)
            X[k + 1] = X[k] + dt * f
            if clip_nonnegative:
                np.maximum(X[k + 1], 0.0, out=X[k + 1])
            if not np.all(np.isfinite(X[k + 1])):
                raise SimulationError(f"non-finite state at step {k + 1}", k + 1)
    return X


def _noise_levels(rhs, x0, dt, steps, noise: NoiseSpec | None) -> np.ndarray | None:
    if noise is None:
        return None
    n = x0.size
    if noise.mode == "variance":
        return np.full(n, math.sqrt(noise.value))
    X = _iterate(rhs, x0, dt, steps, None, None)
    F = np.array([rhs(X[k]) for k in range(steps)])
    rms = np.sqrt(np.mean(F * F, axis=0))
    return rms / 10.0 ** (noise.value / 20.0)


def simulate_repressilator(
    params: RepressilatorParams, init, noise: NoiseSpec | None = None, clip_nonnegative: bool = False
) -> TimeSeries:
    """Forward-Euler map ``x_{k+1} = x_k + dt (f(x_k) + xi_k)`` of the six states.

    States are ordered ``(m1, m2, m3, p1, p2, p3)``; mRNA ``i`` is repressed by
    protein ``REPRESSOR[i]``.  Repressed mRNA levels come within a few
    thousandths of zero, so additive process noise usually drives some state
    negative, where Hill features are undefined.  ``clip_nonnegative``
    projects every step onto ``x >= 0``; it is off by default because it
    alters the map.
    """
    x0 = np.asarray(init, dtype=float).reshape(-1)
    if x0.size != 6:
        raise ValueError("repressilator needs 6 initial states")
    if np.any(x0 < 0):
        raise ValueError("initial states must be non-negative")
    rhs = lambda x: repressilator_rhs(params, x)  # noqa: E731
    sd = _noise_levels(rhs, x0, params.dt, params.steps, noise)
    rng = Xoshiro256(noise.seed) if noise is not None else None
    X = _iterate(rhs, x0, params.dt, params.steps, sd, rng, clip_nonnegative)
    return TimeSeries(params.dt * np.arange(params.steps + 1), X)


def simulate_kuramoto(params: KuramotoParams, init, noise: NoiseSpec | None = None) -> TimeSeries:
    """Forward-Euler phase map; phases are left unwrapped."""
    x0 = np.asarray(init, dtype=float).reshape(-1)
    if x0.size != params.n:
        raise ValueError(f"need {params.n} initial phases")
    if np.any(x0 < 0) or np.any(x0 >= 2.0 * math.pi):
        raise ValueError("initial phases must lie in [0, 2*pi)")
    rhs = lambda x: kuramoto_rhs(params, x)  # noqa: E731
    sd = _noise_levels(rhs, x0, params.dt, params.steps, noise)
    rng = Xoshiro256(noise.seed) if noise is not None else None
    X = _iterate(rhs, x0, params.dt, params.steps, sd, rng)
    return TimeSeries(params.dt * np.arange(params.steps + 1), X)


# ---------------------------------------------------------------------------
# Ground truth
# ---------------------------------------------------------------------------


def repressilator_truth(params: RepressilatorParams, h_max: int = 4) -> list[np.ndarray]:
    """True weights for each state in :func:`build_hill_spec` ``(6, h_max)`` order."""
    n = 6
    N = len(build_hill_spec(n, h_max))
    out = []
    for i in range(3):
        w = np.zeros(N)
        w[i] = -params.gamma[i]
        w[hill_column(n, REPRESSOR[i], params.hill_n[i])] = params.alpha[i]
        out.append(w)
    for i in range(3):
        w = np.zeros(N)
        w[3 + i] = -params.gamma[3 + i]
        w[i] = params.beta[i]
        out.append(w)
    return out


def kuramoto_truth(params: KuramotoParams) -> list[np.ndarray]:
    """True weights for each node in :func:`build_kuramoto_spec` order."""
    out = []
    n = params.n
    for i in range(n):
        w = np.zeros(5 * (n - 1) + 1)
        for j in range(n):
            if j != i and params.weights[i, j] != 0:
                w[kuramoto_column(n, i, j)] = params.weights[i, j]
        w[-1] = params.omega[i]
        out.append(w)
    return out


# ---------------------------------------------------------------------------
# Benchmark instances
# ---------------------------------------------------------------------------


@dataclass
class BenchmarkInstance:
    system: str
    params: RepressilatorParams | KuramotoParams
    series: TimeSeries
    truth: list[np.ndarray]
    specs: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "system": self.system,
                "params": self.params.to_dict(),
                "truth": [
                    {"labels": spec.labels, "weights": w.tolist()} for spec, w in zip(self.specs, self.truth)
                ],
            },
            indent=1,
        )


def sample_repressilator_params(rng: Xoshiro256, jitter: float = 0.1) -> RepressilatorParams:
    def jit(vals):
        return tuple(float(v) * float(f) for v, f in zip(vals, rng.uniform(1 - jitter, 1 + jitter, len(vals))))

    return RepressilatorParams(jit(PAPER_ALPHA), jit(PAPER_BETA), jit(PAPER_GAMMA), PAPER_HILL_N)


def sample_kuramoto_params(rng: Xoshiro256, n: int, density: float = 0.1) -> KuramotoParams:
    proto = KURAMOTO_PROTOCOL
    off = [(i, j) for i in range(n) for j in range(n) if i != j]
    k = int(round(density * len(off)))
    picks = rng.choice(len(off), k)
    W = np.zeros((n, n))
    vals = rng.uniform(-proto["weight_range"], proto["weight_range"], k)
    for p, v in zip(picks, vals):
        i, j = off[p]
        W[i, j] = v
    omega = rng.normal(n, scale=math.sqrt(proto["omega_var"]))
    return KuramotoParams(n, omega, W, proto["dt"], proto["steps"])


def sample_benchmark_instance(which: str, trial_seed: int, n: int = 20) -> BenchmarkInstance:
    """Draw parameters and initial state, simulate noiselessly, return truth.

    ``repressilator``: every rate scaled by an independent U[0.9, 1.1] factor,
    Hill coefficients 3, initial states U(0, 1), 51 samples with dt = 1.
    ``kuramoto``: ``round(0.1 n (n-1))`` nonzero couplings U[-10, 10] at
    distinct off-diagonal positions, natural frequencies with variance 10,
    initial phases U(0, 2 pi), 451 samples with dt = 0.1.
    """
    rng = Xoshiro256(trial_seed)
    if which == "repressilator":
        params = sample_repressilator_params(rng, REPRESSILATOR_PROTOCOL["jitter"])
        params = RepressilatorParams(params.alpha, params.beta, params.gamma, params.hill_n, seed=trial_seed)
        init = rng.uniform_open(0.0, 1.0, 6)
        series = simulate_repressilator(params, init)
        spec = build_hill_spec(6, REPRESSILATOR_PROTOCOL["hill_max"])
        return BenchmarkInstance(which, params, series, repressilator_truth(params), [spec] * 6)
    if which == "kuramoto":
        params = sample_kuramoto_params(rng, n, KURAMOTO_PROTOCOL["density"])
        params = KuramotoParams(params.n, params.omega, params.weights, params.dt, params.steps, seed=trial_seed)
        init = rng.uniform(0.0, 2.0 * math.pi, n)
        series = simulate_kuramoto(params, init)
        specs = [build_kuramoto_spec(n, i) for i in range(n)]
        return BenchmarkInstance(which, params, series, kuramoto_truth(params), specs)
    raise ValueError(f"unknown benchmark system {which!r}")


def instance_seed(root: int, trial: int) -> int:
    return derive_seed(root, trial)


def inject_noise_at_snr(phi_w, snr_db: float, seed: int) -> tuple[np.ndarray, float]:
    """Gaussian noise rescaled so that ``20 log10(||phi_w|| / ||xi||) == snr_db``.

    Returns
    -------
    xi : ndarray
    lambda_effective : float
        ``||xi||^2 / M``, the realised per-sample variance.
    """
    s = np.asarray(phi_w, dtype=float).reshape(-1)
    ns = float(np.linalg.norm(s))
    if not ns > 0:
        raise ValueError("signal norm must be positive")
    if not math.isfinite(snr_db):
        raise ValueError("snr_db must be finite")
    rng = Xoshiro256(seed)
    xi = rng.normal(s.size)
    nx = float(np.linalg.norm(xi))
    while nx == 0.0:  # pragma: no cover - probability zero
        xi = rng.normal(s.size)
        nx = float(np.linalg.norm(xi))
    xi *= ns / (nx * 10.0 ** (snr_db / 20.0))
    return xi, float(xi @ xi) / s.size

