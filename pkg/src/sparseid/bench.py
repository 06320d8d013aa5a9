"""Monte-Carlo comparison of the SBL solver and the baselines across SNRs.

For each trial a benchmark instance is drawn from ``derive_seed(root, trial)``
and simulated without noise.  For each SNR and state, Gaussian noise from
``derive_seed(root, trial, snr_key(snr), state)`` is rescaled to the exact SNR
and added to the regression target; every algorithm is then run on the same
noisy problem.  The SBL noise level is the realised per-sample noise variance.

Raw rows contain only quantities that are deterministic given the plan; wall
times are stored separately so that reruns produce byte-identical row files.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__ as _version
from . import kernels
from ._io import atomic_write_text
from .baselines import BaselineSpec, run_baseline
from .dictionary import evaluate
from .metrics import score
from .plot import line_chart
from .rng import derive_seed, snr_key
from .sbl import SblConfig, identify
from .sim import inject_noise_at_snr, sample_benchmark_instance

SYSTEMS = ("repressilator", "kuramoto")
ALGORITHMS = ("sbl", "lasso", "ista", "omp")
DEFAULT_SNR_GRID = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0)

ROW_FIELDS = (
    "trial", "snr_db", "state", "algorithm", "status", "rnmse",
    "precision", "recall", "exact", "n_support", "iterations", "lambda",
)
AGG_FIELDS = (
    "algorithm", "snr_db", "rnmse_mean", "rnmse_std", "precision_mean", "recall_mean",
    "exact_fraction", "time_mean_s", "n_rows", "n_failed",
)


@dataclass(frozen=True)
class ExperimentPlan:
    """What to run.  ``kuramoto_n`` only matters for the Kuramoto system."""

    system: str = "repressilator"
    snr_grid_db: tuple[float, ...] = DEFAULT_SNR_GRID
    trials: int = 20
    algorithms: tuple[str, ...] = ALGORITHMS
    root_seed: int = 0
    kuramoto_n: int = 20
    sbl_normalize: bool = False
    sbl_max_outer_iter: int = 30
    output_dir: str | None = None
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "snr_grid_db", tuple(float(s) for s in self.snr_grid_db))
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        if self.system not in SYSTEMS:
            raise ValueError(f"system must be one of {SYSTEMS}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.snr_grid_db:
            raise ValueError("SNR grid must be nonempty")
        if not all(math.isfinite(s) for s in self.snr_grid_db):
            raise ValueError("SNR values must be finite")
        if not self.algorithms or any(a not in ALGORITHMS for a in self.algorithms):
            raise ValueError(f"algorithms must be drawn from {ALGORITHMS}")
        if self.kuramoto_n < 2:
            raise ValueError("kuramoto_n must be >= 2")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def result_fields(self) -> dict:
        """Fields that determine the raw rows."""
        d = asdict(self)
        d.pop("output_dir")
        d.pop("workers")
        d["snr_grid_db"] = list(d["snr_grid_db"])
        d["algorithms"] = list(d["algorithms"])
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.result_fields(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentPlan":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown plan keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "ExperimentPlan":
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        if path.suffix.lower() == ".toml":
            try:
                import tomllib
            except ImportError as exc:  # Python < 3.11
                raise ValueError("TOML plans need Python 3.11+; use JSON") from exc
            return cls.from_dict(tomllib.loads(text))
        return cls.from_dict(json.loads(text))


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class BenchmarkReport:
    plan: ExperimentPlan
    rows: list[dict]
    timings: list[dict]
    aggregates: list[dict]
    provenance: dict = field(default_factory=dict)

    def rows_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(ROW_FIELDS)
        for r in self.rows:
            w.writerow([_fmt(r[k]) for k in ROW_FIELDS])
        return buf.getvalue()

    def timings_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("trial", "snr_db", "state", "algorithm", "wall_time_s"))
        for r in self.timings:
            w.writerow([_fmt(r[k]) for k in ("trial", "snr_db", "state", "algorithm", "wall_time_s")])
        return buf.getvalue()

    def digest(self) -> str:
        """SHA-256 of the raw rows; identical for identical plans."""
        return hashlib.sha256(self.rows_csv().encode()).hexdigest()

    def aggregate(self, algorithm: str, snr_db: float) -> dict:
        for a in self.aggregates:
            if a["algorithm"] == algorithm and a["snr_db"] == float(snr_db):
                return a
        raise KeyError((algorithm, snr_db))

    def to_dict(self) -> dict:
        return {
            "plan": self.plan.result_fields(),
            "aggregates": self.aggregates,
            "provenance": self.provenance,
        }

    def table(self) -> str:
        lines = [f"{'algorithm':<8} {'snr_db':>7} {'rnmse':>9} {'std':>9} {'prec':>6} {'recall':>6} {'exact':>6} {'time_s':>9}"]
        for a in self.aggregates:
            lines.append(
                f"{a['algorithm']:<8} {a['snr_db']:>7g} {a['rnmse_mean']:>9.4f} {a['rnmse_std']:>9.4f} "
                f"{a['precision_mean']:>6.3f} {a['recall_mean']:>6.3f} {a['exact_fraction']:>6.3f} {a['time_mean_s']:>9.4f}"
            )
        return "\n".join(lines)

    def write(self, outdir: str | os.PathLike) -> list[Path]:
        outdir = Path(outdir)
        return [
            atomic_write_text(outdir / "raw_rows.csv", self.rows_csv()),
            atomic_write_text(outdir / "timings.csv", self.timings_csv()),
            atomic_write_text(outdir / "report.json", json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"),
        ]


# ---------------------------------------------------------------------------
# Trials
# ---------------------------------------------------------------------------


def _run_algorithm(alg: str, problem, lam_eff: float, plan: ExperimentPlan):
    if alg == "sbl":
        cfg = SblConfig(lam=lam_eff, normalize=plan.sbl_normalize, max_outer_iter=plan.sbl_max_outer_iter)
        res = identify(problem, cfg)
        return res.w_hat, res.status, res.iterations, res.lam
    if alg == "omp":
        M, N = problem.phi.shape
        spec = BaselineSpec("omp", max_atoms=min(M, N), residual_tol=math.sqrt(M * lam_eff))
    else:
        spec = BaselineSpec(alg)
    sol = run_baseline(spec, problem)
    return sol.w, sol.status, sol.iterations, float(sol.info.get("lambda", math.nan))


def run_trial(plan: ExperimentPlan, trial: int) -> tuple[list[dict], list[dict]]:
    """All rows of one trial (every SNR, state and algorithm)."""
    rows, times = [], []
    n_states = 6 if plan.system == "repressilator" else plan.kuramoto_n

    def failed(snr, state, alg, status):
        rows.append({
            "trial": trial, "snr_db": snr, "state": state, "algorithm": alg, "status": status,
            "rnmse": math.nan, "precision": math.nan, "recall": math.nan, "exact": False,
            "n_support": 0, "iterations": 0, "lambda": math.nan,
        })
        times.append({"trial": trial, "snr_db": snr, "state": state, "algorithm": alg, "wall_time_s": math.nan})

    try:
        inst = sample_benchmark_instance(plan.system, derive_seed(plan.root_seed, trial), n=plan.kuramoto_n)
        problems = [evaluate(inst.specs[i], inst.series, i) for i in range(n_states)]
    except Exception as exc:  # noqa: BLE001 - a failed instance becomes failed rows
        for snr in plan.snr_grid_db:
            for state in range(n_states):
                for alg in plan.algorithms:
                    failed(snr, state, alg, f"failed:{type(exc).__name__}")
        return rows, times

    for snr in plan.snr_grid_db:
        for state in range(n_states):
            clean = problems[state]
            truth = inst.truth[state]
            signal = clean.phi @ truth
            xi, lam_eff = inject_noise_at_snr(signal, snr, derive_seed(plan.root_seed, trial, snr_key(snr), state))
            noisy = type(clean)(clean.y + xi, clean.phi, clean.column_labels, clean.target_label)
            for alg in plan.algorithms:
                try:
                    t0 = time.perf_counter()
                    w, status, iters, lam = _run_algorithm(alg, noisy, lam_eff, plan)
                    elapsed = time.perf_counter() - t0
                    if not np.all(np.isfinite(w)):
                        raise FloatingPointError("non-finite weights")
                except Exception as exc:  # noqa: BLE001 - recorded, sweep continues
                    failed(snr, state, alg, f"failed:{type(exc).__name__}")
                    continue
                sc = score(w, truth)
                rows.append({
                    "trial": trial, "snr_db": snr, "state": state, "algorithm": alg, "status": status,
                    "rnmse": sc.rnmse, "precision": sc.support_precision, "recall": sc.support_recall,
                    "exact": sc.exact_support, "n_support": int(np.count_nonzero(w)),
                    "iterations": int(iters), "lambda": float(lam),
                })
                times.append({"trial": trial, "snr_db": snr, "state": state, "algorithm": alg, "wall_time_s": elapsed})
    return rows, times


def _run_trial_star(args):
    return run_trial(*args)


def aggregate_rows(plan: ExperimentPlan, rows: list[dict], timings: list[dict]) -> list[dict]:
    out = []
    for alg in plan.algorithms:
        for snr in plan.snr_grid_db:
            sel = [r for r in rows if r["algorithm"] == alg and r["snr_db"] == snr]
            ok = [r for r in sel if not str(r["status"]).startswith("failed")]
            tsel = [t["wall_time_s"] for t in timings
                    if t["algorithm"] == alg and t["snr_db"] == snr and math.isfinite(t["wall_time_s"])]
            e = np.array([r["rnmse"] for r in ok], dtype=float)
            out.append({
                "algorithm": alg,
                "snr_db": snr,
                "rnmse_mean": float(e.mean()) if e.size else math.nan,
                "rnmse_std": float(e.std()) if e.size else math.nan,
                "precision_mean": float(np.mean([r["precision"] for r in ok])) if ok else math.nan,
                "recall_mean": float(np.mean([r["recall"] for r in ok])) if ok else math.nan,
                "exact_fraction": float(np.mean([r["exact"] for r in ok])) if ok else math.nan,
                "time_mean_s": float(np.mean(tsel)) if tsel else math.nan,
                "n_rows": len(sel),
                "n_failed": len(sel) - len(ok),
            })
    return out


def run_experiment(plan: ExperimentPlan, workers: int | None = None, write: bool = True) -> BenchmarkReport:
    """Run every trial, aggregate, and (if ``plan.output_dir``) persist the report.

    Trials are distributed over ``workers`` processes; results are ordered by
    trial so the report does not depend on the worker count.
    """
    nw = plan.workers if workers is None else workers
    t0 = time.perf_counter()
    args = [(plan, t) for t in range(plan.trials)]
    if nw > 1 and plan.trials > 1:
        with ProcessPoolExecutor(max_workers=min(nw, plan.trials)) as pool:
            results = list(pool.map(_run_trial_star, args))
    else:
        results = [run_trial(*a) for a in args]
    rows = [r for res in results for r in res[0]]
    timings = [t for res in results for t in res[1]]
    report = BenchmarkReport(plan, rows, timings, aggregate_rows(plan, rows, timings))
    report.provenance = {
        "root_seed": plan.root_seed,
        "config_hash": plan.config_hash(),
        "version": _version,
        "kernel_backend": kernels.BACKEND,
        "rows_sha256": report.digest(),
        "n_rows": len(rows),
        "wall_time_s": time.perf_counter() - t0,
    }
    if write and plan.output_dir:
        report.write(plan.output_dir)
    return report


def emit_plot_data(report: BenchmarkReport, outdir: str | os.PathLike) -> list[Path]:
    """Write ``rnmse_vs_snr.csv`` and ``runtime_vs_snr.csv`` plus an SVG of each.

    CSV columns are ``algorithm,snr_db,mean,stddev``.  Nothing is written if
    the report has no aggregates.
    """
    if not report.aggregates or not report.rows:
        raise ValueError("report is empty; nothing to plot")
    by_alg_time: dict[tuple, list[float]] = {}
    for t in report.timings:
        if math.isfinite(t["wall_time_s"]):
            by_alg_time.setdefault((t["algorithm"], t["snr_db"]), []).append(t["wall_time_s"])
    figures = {
        "rnmse_vs_snr": [(a["algorithm"], a["snr_db"], a["rnmse_mean"], a["rnmse_std"]) for a in report.aggregates],
        "runtime_vs_snr": [
            (a["algorithm"], a["snr_db"],
             float(np.mean(by_alg_time.get((a["algorithm"], a["snr_db"]), [math.nan]))),
             float(np.std(by_alg_time.get((a["algorithm"], a["snr_db"]), [math.nan]))))
            for a in report.aggregates
        ],
    }
    labels = {"rnmse_vs_snr": ("RNMSE", False), "runtime_vs_snr": ("wall time per problem [s]", True)}
    rendered = {}
    for name, data in figures.items():
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("algorithm", "snr_db", "mean", "stddev"))
        for alg, snr, mean, std in data:
            w.writerow((alg, repr(float(snr)), repr(float(mean)), repr(float(std))))
        series: dict[str, list] = {}
        for alg, snr, mean, _ in data:
            series.setdefault(alg, []).append((snr, mean))
        ylabel, logy = labels[name]
        try:
            svg = line_chart(series, f"{report.plan.system}: {ylabel} vs SNR", "SNR [dB]", ylabel, log_y=logy)
        except ValueError:
            svg = line_chart({k: [(x, 0.0) for x, _ in v] for k, v in series.items()}, name, "SNR [dB]", ylabel)
        rendered[name] = (buf.getvalue(), svg)
    outdir = Path(outdir)
    paths = []
    for name, (text, svg) in rendered.items():
        paths.append(atomic_write_text(outdir / f"{name}.csv", text))
        paths.append(atomic_write_text(outdir / f"{name}.svg", svg))
    return paths


def read_plot_csv(path: str | os.PathLike) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [
            {"algorithm": r["algorithm"], "snr_db": float(r["snr_db"]), "mean": float(r["mean"]), "stddev": float(r["stddev"])}
            for r in csv.DictReader(fh)
        ]
