"""Compare the compiled and numpy inner-solver kernels.

Runs ``ipm_l1`` and ``fista_l1`` from both backends on identical random Gram
problems, checks that the solutions agree and reports median wall times.

    python3 benchmarks/bench_kernels.py [--sizes 20,54,101,250] [--repeats 15]
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from sparseid import _kernels_py

try:
    from sparseid import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def make_problem(n: int, seed: int):
    rng = np.random.default_rng(seed)
    m = max(n // 2, 10)
    phi = rng.standard_normal((m, n))
    w = np.zeros(n)
    w[rng.choice(n, max(1, n // 10), replace=False)] = rng.standard_normal(max(1, n // 10)) * 3
    y = phi @ w + 0.05 * rng.standard_normal(m)
    Q = phi.T @ phi
    c = phi.T @ y
    thr = np.full(n, 0.1 * np.max(np.abs(c)))
    step = 1.0 / (2.0 * np.linalg.eigvalsh(Q)[-1] * (1 + 1e-6))
    return Q, c, thr, step, float(y @ y)


def timed(fn, repeats: int) -> tuple[float, object]:
    out = fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times), out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="20,54,101,250")
    ap.add_argument("--repeats", type=int, default=15)
    args = ap.parse_args(argv)
    if _kernels_c is None:
        print("compiled kernels not built; run 'python3 setup.py build_ext --inplace'")
        return 1
    print(f"{'kernel':<6} {'N':>5} {'numpy_ms':>10} {'compiled_ms':>12} {'speedup':>8} {'max|dw|':>10}")
    for n in (int(s) for s in args.sizes.split(",")):
        Q, c, thr, step, yy = make_problem(n, seed=n)
        # Kernels take the problem scaled as in weighted_l1.solve_gram; raw inputs are fine for timing.
        cases = {
            "ipm": lambda mod: mod.ipm_l1(Q, c, thr, 1e-10, 200, yy),
            "fista": lambda mod: mod.fista_l1(Q, c, thr, step, 1e-10, 20000, True),
        }
        for name, call in cases.items():
            t_py, (w_py, *_) = timed(lambda: call(_kernels_py), args.repeats)
            t_c, (w_c, *_) = timed(lambda: call(_kernels_c), args.repeats)
            dw = float(np.max(np.abs(np.asarray(w_py) - np.asarray(w_c))))
            print(f"{name:<6} {n:>5} {1e3 * t_py:>10.3f} {1e3 * t_c:>12.3f} {t_py / t_c:>8.2f} {dw:>10.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
