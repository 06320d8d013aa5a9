"""Command-line interface: ``sparseid {simulate,dict,identify,bench,score}``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._io import atomic_write_text
from .dictionary import (
    DictionaryEvaluationError,
    DictionarySpec,
    TimeSeries,
    evaluate,
    parse_dict_option,
    select_columns,
)
from .metrics import score
from .rng import Xoshiro256, derive_seed
from .sbl import SblConfig, identify
from .sim import (
    KURAMOTO_PROTOCOL,
    REPRESSILATOR_PROTOCOL,
    KuramotoParams,
    NoiseSpec,
    RepressilatorParams,
    SimulationError,
    kuramoto_truth,
    repressilator_truth,
    sample_kuramoto_params,
    simulate_kuramoto,
    simulate_repressilator,
)
from .weighted_l1 import LinearConstraints

# Every protocol constant used by ``--preset paper`` and the default bench plan.
PRESETS = {
    "paper": {
        "repressilator": dict(REPRESSILATOR_PROTOCOL),
        "kuramoto": dict(KURAMOTO_PROTOCOL, n=20),
        "bench": {"snr_grid_db": [0.0, 5.0, 10.0, 15.0, 20.0, 25.0], "trials": 20},
    },
}


class CliError(Exception):
    """Runtime failure reported with exit code 1."""


def _load_json(parser: argparse.ArgumentParser, path: str, what: str):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        parser.error(f"{what} file not found: {path}")
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read {what} file {path}: {exc}")


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _lambda_arg(text: str):
    if text == "auto":
        return "auto"
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("lambda must be a positive number or 'auto'") from None
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError("lambda must be a positive number or 'auto'")
    return v


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def cmd_simulate(args, parser) -> int:
    if args.preset is None and args.params is None:
        parser.error("one of --preset or --params is required")
    if args.preset is not None and args.preset not in PRESETS:
        parser.error(f"unknown preset {args.preset!r}; choose from {sorted(PRESETS)}")
    noise = None
    noise_seed = derive_seed(args.seed, 1)
    try:
        if args.noise_snr_db is not None:
            noise = NoiseSpec("snr_db", args.noise_snr_db, noise_seed)
        elif args.noise_var is not None:
            noise = NoiseSpec("variance", args.noise_var, noise_seed)
    except ValueError as exc:
        parser.error(str(exc))

    rng = Xoshiro256(args.seed)
    file_cfg = _load_json(parser, args.params, "params") if args.params else {}
    init = file_cfg.get("init")
    try:
        if args.system == "repressilator":
            if args.params:
                params = RepressilatorParams.from_dict(file_cfg.get("params", file_cfg))
            else:
                proto = PRESETS[args.preset]["repressilator"]
                params = RepressilatorParams(dt=proto["dt"], steps=proto["steps"], seed=args.seed)
            if init is None:
                init = rng.uniform_open(0.0, 1.0, 6)
            h_max = PRESETS["paper"]["repressilator"]["hill_max"]
            truth = repressilator_truth(params, h_max)
            dict_opt = f"hill:{h_max}"
        else:
            if args.params:
                params = KuramotoParams.from_dict(file_cfg.get("params", file_cfg))
            else:
                proto = PRESETS[args.preset]["kuramoto"]
                n = args.n if args.n is not None else proto["n"]
                if n < 2:
                    parser.error("--n must be >= 2")
                p = sample_kuramoto_params(rng, n, proto["density"])
                params = KuramotoParams(p.n, p.omega, p.weights, p.dt, p.steps, seed=args.seed)
            if init is None:
                init = rng.uniform(0.0, 2.0 * math.pi, params.n)
            truth = kuramoto_truth(params)
            dict_opt = "kuramoto"
    except (KeyError, TypeError, ValueError) as exc:
        parser.error(f"invalid parameters: {exc}")

    try:
        if args.system == "repressilator":
            ts = simulate_repressilator(params, init, noise, args.clip_nonnegative)
        else:
            ts = simulate_kuramoto(params, init, noise)
    except ValueError as exc:
        parser.error(str(exc))
    except SimulationError as exc:
        raise CliError(f"simulation failed: {exc}") from exc

    out = Path(args.out)
    truth_path = Path(args.truth) if args.truth else out.with_suffix(".truth.json")
    payload = {
        "system": args.system,
        "params": params.to_dict(),
        "init": [float(v) for v in np.asarray(init, dtype=float)],
        "noise": None if noise is None else {"mode": noise.mode, "value": noise.value, "seed": noise.seed},
        "seed": args.seed,
        "dict": dict_opt,
        "true_weights": [[float(v) for v in w] for w in truth],
    }
    atomic_write_text(out, ts.to_csv())
    atomic_write_text(truth_path, json.dumps(payload, indent=1) + "\n")
    print(f"wrote {out} ({ts.n_samples} samples, {ts.n_x} states) and {truth_path}")
    return 0


# ---------------------------------------------------------------------------
# dict
# ---------------------------------------------------------------------------


def cmd_dict(args, parser) -> int:
    n_x, n_u = args.n_x, args.n_u
    if args.data:
        try:
            ts = TimeSeries.from_csv(Path(args.data).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            parser.error(f"cannot read data: {exc}")
        n_x, n_u = ts.n_x, ts.n_u
    if n_x is None:
        parser.error("give --n-x or --data")
    target = None if args.target is None else args.target - 1
    try:
        spec = parse_dict_option(args.dict, n_x, n_u, target)
    except ValueError as exc:
        parser.error(str(exc))
    if args.out:
        atomic_write_text(args.out, spec.to_json() + "\n")
    if args.count:
        print(len(spec))
    else:
        for j, label in enumerate(spec.labels):
            print(f"{j:6d}  {label}")
    return 0


# ---------------------------------------------------------------------------
# identify
# ---------------------------------------------------------------------------


def _selection(spec: DictionarySpec, block) -> np.ndarray:
    if block is None:
        return np.zeros(0, dtype=np.int64)
    if isinstance(block, dict):
        return select_columns(spec, block.get("kinds", ()), block.get("labels", ()))
    return select_columns(spec, (), block)


def constraints_from_json(cfg: dict, spec: DictionarySpec) -> LinearConstraints:
    """Build constraints for ``spec`` from a JSON object.

    Keys (all optional): ``nonnegative`` / ``nonpositive`` as
    ``{"kinds": [...], "labels": [glob, ...]}`` or a list of label globs;
    ``fixed`` mapping label to value; ``A``/``b`` and ``G``/``h`` raw matrices
    over all dictionary columns.
    """
    unknown = set(cfg) - {"nonnegative", "nonpositive", "fixed", "A", "b", "G", "h"}
    if unknown:
        raise ValueError(f"unknown constraint keys: {sorted(unknown)}")
    n = len(spec)
    index = {label: j for j, label in enumerate(spec.labels)}
    fixed = {}
    for label, val in (cfg.get("fixed") or {}).items():
        if label not in index:
            raise ValueError(f"fixed: no column labelled {label!r}")
        fixed[index[label]] = float(val)
    base = LinearConstraints.bounds(n, _selection(spec, cfg.get("nonnegative")),
                                    _selection(spec, cfg.get("nonpositive")), fixed)
    A, b, G, h = base.eq_matrix, base.eq_rhs, base.ineq_matrix, base.ineq_rhs
    if "A" in cfg or "b" in cfg:
        A2, b2 = np.atleast_2d(np.asarray(cfg["A"], dtype=float)), np.asarray(cfg["b"], dtype=float).reshape(-1)
        A = A2 if A is None else np.vstack([A, A2])
        b = b2 if b is None else np.concatenate([b, b2])
    if "G" in cfg or "h" in cfg:
        G2, h2 = np.atleast_2d(np.asarray(cfg["G"], dtype=float)), np.asarray(cfg["h"], dtype=float).reshape(-1)
        G = G2 if G is None else np.vstack([G, G2])
        h = h2 if h is None else np.concatenate([h, h2])
    cons = LinearConstraints(A, b, G, h)
    cons.check_columns(n)
    return cons


def _support_table(result) -> str:
    pairs = sorted(zip(result.support_labels, (result.w_hat[j] for j in result.support)))
    lines = [f"# {result.target_label}  status={result.status}  lambda={result.lam:.6g}  terms={len(pairs)}"]
    lines += [f"  {label:<24s} {coef: .6g}" for label, coef in pairs]
    return "\n".join(lines)


def cmd_identify(args, parser) -> int:
    try:
        ts = TimeSeries.from_csv(Path(args.data).read_text(encoding="utf-8"))
    except FileNotFoundError:
        parser.error(f"data file not found: {args.data}")
    except (OSError, ValueError) as exc:
        parser.error(f"cannot parse {args.data}: {exc}")
    if args.all_states:
        states = list(range(ts.n_x))
    else:
        if not 1 <= args.state <= ts.n_x:
            parser.error(f"--state {args.state} out of range 1..{ts.n_x}")
        states = [args.state - 1]
    cons_cfg = _load_json(parser, args.constraints, "constraints") if args.constraints else None
    try:
        config = SblConfig(lam=args.lam, normalize=args.normalize, max_outer_iter=args.max_iter)
    except ValueError as exc:
        parser.error(str(exc))

    results = []
    for s in states:
        try:
            spec = parse_dict_option(args.dict, ts.n_x, ts.n_u, s)
        except ValueError as exc:
            parser.error(str(exc))
        try:
            cons = constraints_from_json(cons_cfg, spec) if cons_cfg is not None else None
        except (KeyError, ValueError) as exc:
            parser.error(f"invalid constraints: {exc}")
        try:
            problem = evaluate(spec, ts, s, args.output_mode)
        except DictionaryEvaluationError as exc:
            raise CliError(
                f"state x{s + 1}: dictionary evaluation failed at row {exc.row}, column {exc.column} "
                f"({exc.label}): {exc}"
                + ("; see 'simulate --clip-nonnegative'" if "negative" in str(exc) else "")
            ) from exc
        except ValueError as exc:
            parser.error(str(exc))
        res = identify(problem, config, cons)
        results.append(res)
        print(_support_table(res))

    if args.out:
        payload = {
            "data": str(args.data),
            "dict": args.dict,
            "output_mode": args.output_mode,
            "results": [dict(r.to_dict(), state=s + 1) for r, s in zip(results, states)],
        }
        atomic_write_text(args.out, json.dumps(payload, indent=1) + "\n")
    return 0


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


def cmd_bench(args, parser) -> int:
    from .bench import ExperimentPlan, emit_plot_data, run_experiment

    if args.plan:
        try:
            plan = ExperimentPlan.from_file(args.plan)
        except FileNotFoundError:
            parser.error(f"plan file not found: {args.plan}")
        except (OSError, ValueError, TypeError) as exc:
            parser.error(f"invalid plan: {exc}")
    else:
        preset = PRESETS["paper"]["bench"]
        try:
            plan = ExperimentPlan(
                system=args.system,
                snr_grid_db=tuple(args.snr if args.snr is not None else preset["snr_grid_db"]),
                trials=args.trials if args.trials is not None else preset["trials"],
                algorithms=tuple(a.strip() for a in args.algs.split(",") if a.strip()),
                root_seed=args.seed,
                kuramoto_n=args.n,
                sbl_normalize=args.normalize,
            )
        except ValueError as exc:
            parser.error(str(exc))
    report = run_experiment(plan, workers=args.workers, write=False)
    if all(str(r["status"]).startswith("failed") for r in report.rows):
        raise CliError("every trial failed")
    out = Path(args.out)
    report.write(out)
    emit_plot_data(report, out)
    print(report.table())
    print(f"rows sha256: {report.digest()}")
    print(f"wrote {out}")
    return 0


# ---------------------------------------------------------------------------
# score
# ---------------------------------------------------------------------------


def cmd_score(args, parser) -> int:
    result = _load_json(parser, args.result, "result")
    truth = _load_json(parser, args.truth, "truth")
    try:
        true_w = truth["true_weights"]
        blocks = result["results"] if "results" in result else [result]
    except (KeyError, TypeError):
        parser.error("result must come from 'identify --out' and truth from 'simulate'")
    rows = []
    for blk in blocks:
        s = int(blk.get("state", 1))
        if not 1 <= s <= len(true_w):
            parser.error(f"state {s} has no ground truth")
        w_hat = np.asarray(blk["w_hat"], dtype=float)
        w_true = np.asarray(true_w[s - 1], dtype=float)
        if w_hat.shape != w_true.shape:
            parser.error(f"state {s}: {w_hat.size} estimated weights vs {w_true.size} true weights")
        sc = score(w_hat, w_true, args.zero_tol)
        rows.append({"state": s, "rnmse": sc.rnmse, "precision": sc.support_precision,
                     "recall": sc.support_recall, "exact": sc.exact_support})
    print(f"{'state':>5} {'rnmse':>10} {'precision':>9} {'recall':>6} {'exact':>5}")
    for r in rows:
        print(f"{r['state']:>5} {r['rnmse']:>10.4g} {r['precision']:>9.3f} {r['recall']:>6.3f} {str(r['exact']):>5}")
    if args.out:
        atomic_write_text(args.out, json.dumps(rows, indent=1) + "\n")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sparseid", description="Sparse identification of nonlinear dynamics.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate a benchmark system to CSV")
    s.add_argument("system", choices=("repressilator", "kuramoto"))
    s.add_argument("--preset", help="named protocol bundle (available: paper)")
    s.add_argument("--params", help="JSON file with 'params' (and optional 'init')")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--noise-snr-db", type=float, help="process noise calibrated per state to this SNR")
    g.add_argument("--noise-var", type=float, help="process noise variance")
    s.add_argument("--clip-nonnegative", action="store_true",
                   help="project repressilator states onto x >= 0 after each step")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n", type=int, help="Kuramoto network size (preset only)")
    s.add_argument("--out", required=True, help="output CSV")
    s.add_argument("--truth", help="truth JSON path (default: <out>.truth.json)")
    s.set_defaults(func=cmd_simulate)

    d = sub.add_parser("dict", help="list dictionary columns")
    d.add_argument("--dict", required=True, help="hill:H | narx:dx,du,mx,mu | kuramoto")
    d.add_argument("--data", help="take dimensions from this CSV")
    d.add_argument("--n-x", type=int)
    d.add_argument("--n-u", type=int, default=0)
    d.add_argument("--target", type=int, help="target state (1-based; kuramoto only)")
    d.add_argument("--count", action="store_true", help="print only the number of columns")
    d.add_argument("--out", help="write the spec as JSON")
    d.set_defaults(func=cmd_dict)

    i = sub.add_parser("identify", help="identify sparse dynamics from a CSV")
    i.add_argument("--data", required=True)
    i.add_argument("--dict", required=True, help="hill:H | narx:dx,du,mx,mu | kuramoto")
    g = i.add_mutually_exclusive_group(required=True)
    g.add_argument("--state", type=int, help="target state (1-based)")
    g.add_argument("--all-states", action="store_true")
    i.add_argument("--lambda", dest="lam", type=_lambda_arg, default="auto", help="noise variance or 'auto'")
    i.add_argument("--constraints", help="JSON constraints file")
    i.add_argument("--output-mode", choices=("finite_difference", "next_state"), default="finite_difference")
    i.add_argument("--normalize", action="store_true", help="run on unit-norm columns")
    i.add_argument("--max-iter", type=int, default=30, help="outer reweighting iterations")
    i.add_argument("--out", help="result JSON")
    i.set_defaults(func=cmd_identify)

    b = sub.add_parser("bench", help="Monte-Carlo sweep over SNR")
    b.add_argument("--plan", help="JSON (or TOML on Python 3.11+) plan file")
    b.add_argument("--system", choices=("repressilator", "kuramoto"), default="repressilator")
    b.add_argument("--trials", type=int)
    b.add_argument("--snr", type=_float_list, help="comma-separated SNRs in dB")
    b.add_argument("--algs", default="sbl,lasso,ista,omp")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--n", type=int, default=20, help="Kuramoto network size")
    b.add_argument("--normalize", action="store_true", help="SBL on unit-norm columns")
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--out", required=True, help="output directory")
    b.set_defaults(func=cmd_bench)

    c = sub.add_parser("score", help="score identify output against simulate truth")
    c.add_argument("--result", required=True)
    c.add_argument("--truth", required=True)
    c.add_argument("--zero-tol", type=float, default=1e-4)
    c.add_argument("--out")
    c.set_defaults(func=cmd_score)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    if getattr(args, "workers", 1) < 1:
        sub.error("--workers must be >= 1")
    try:
        return args.func(args, sub)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
