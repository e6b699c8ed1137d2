"""Command-line front end.

Every subcommand writes its primary output (JSON report or CSV) to ``--out``
or stdout.  Outputs depend only on the flags that define the experiment, so
reruns are byte-identical whatever ``--workers`` is.  Run metadata that
cannot be reproduced (wall time) goes to a ``<out>.manifest.json`` sidecar,
or to stderr when writing to stdout.

Exit codes: 0 success, 2 usage error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .confidence import ConfidenceSpec
from .descent import DescentConfig
from .entropy import EntropyReport, estimate_entropy
from .mra import SmoothingSchedule, level_complexity_experiment, run_mrhc, stats_csv
from .objective import (
    Bounds,
    EvaluationFault,
    ObjectiveSpec,
    griewank,
    hessian_condition_number,
    make_cosine_family,
    quadratic,
    rosenbrock,
    slice_objective,
)
from .rhc import EmptyBasinTable, RhcConfig, cluster_minima, run_rhc
from .statics import (
    StaticsGeometry,
    StaticsProblem,
    WaveletParams,
    generate_problem,
    read_problem,
    score_recovery,
    write_problem,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RUNTIME = 3

FUNCTIONS = ("rosenbrock", "griewank", "quadratic", "cosine-equal", "cosine-weighted")
SWEEP_HEADER = ("n_dims", "pop", "ce_hat", "delta", "failures")
CONDITION_HEADER = ("n_dims", "condition_number")
SLICE_HEADER = ("t", "f")


class UsageError(ValueError):
    """Flags that are individually well-formed but unusable together."""


# ---------------------------------------------------------------------------
# serialisation


def fmt(x: float) -> str:
    """17 significant digits: enough to round-trip any double."""
    return format(float(x), ".17g")


def to_json(obj: Any, indent: int | None = 2, _level: int = 0) -> str:
    """JSON text with floats at 17 significant digits; NaN and inf become null.
    ``indent=None`` gives a single line."""
    if indent is None:
        pad = end = ""
        nl = ""
    else:
        pad = " " * (indent * (_level + 1))
        end = " " * (indent * _level)
        nl = "\n"
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {to_json(v, indent, _level + 1)}"
                 for k, v in obj.items()]
        return "{" + nl + ("," + nl if nl else ", ").join(items) + nl + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(to_json(v) for v in obj) + "]"
        items = [pad + to_json(v, indent, _level + 1) for v in obj]
        return "[" + nl + ("," + nl if nl else ", ").join(items) + nl + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def csv_text(header, rows) -> str:
    def cell(v):
        if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
            return str(int(v))
        return fmt(v) if math.isfinite(v) else "nan"

    lines = [",".join(header)]
    lines += [",".join(cell(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def report_dict(report: EntropyReport) -> dict:
    minima = [
        {"y": float(y), "k": int(k), "x": float(x), "v": float(v), "q": float(q)}
        for y, k, x, v, q in zip(report.values, report.counts, report.x, report.v,
                                 report.q_hat)
    ]
    return {
        "n_hat": report.n_hat,
        "K": report.K,
        "failures": report.failures,
        "minima": minima,
        "sigma": report.sigma,
        "c": report.c,
        "y_min": report.y_min,
        "ce_hat": report.c_e_hat,
        "delta": report.delta,
        "delta_available": report.delta_available,
        "intervals": dict(report.intervals),
    }


# ---------------------------------------------------------------------------
# argument parsing helpers


def parse_bounds(text: str | None, n_dims: int) -> Bounds | None:
    """``lo:hi`` for every dimension, or a comma list of ``lo:hi`` per dimension."""
    if text is None:
        return None
    parts = text.split(",")
    if len(parts) not in (1, n_dims):
        raise UsageError(f"--bounds has {len(parts)} entries for {n_dims} dimensions")
    lo, hi = [], []
    for p in parts:
        try:
            a, b = (float(s) for s in p.split(":"))
        except ValueError:
            raise UsageError(f"malformed bounds entry {p!r}; expected lo:hi") from None
        lo.append(a)
        hi.append(b)
    if len(parts) == 1:
        lo, hi = lo * n_dims, hi * n_dims
    try:
        return Bounds(np.array(lo), np.array(hi))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def parse_range(text: str) -> list[int]:
    """``a:b`` inclusive, or a comma list of integers."""
    try:
        if ":" in text:
            a, b = (int(s) for s in text.split(":"))
            if b < a:
                raise ValueError
            return list(range(a, b + 1))
        return [int(s) for s in text.split(",")]
    except ValueError:
        raise UsageError(f"malformed integer range {text!r}") from None


def parse_floats(text: str) -> list[float]:
    try:
        return [float(s) for s in text.split(",")]
    except ValueError:
        raise UsageError(f"malformed number list {text!r}") from None


def build_objective(name: str, n_dims: int, bounds: str | None, basins: int) -> ObjectiveSpec:
    if name.startswith("cosine"):
        if n_dims != 1:
            raise UsageError("cosine functions are one-dimensional; use --dim 1")
        b = parse_bounds(bounds, 1)
        weighting = "equal" if name == "cosine-equal" else "centered-decay"
        return make_cosine_family(basins, weighting, b)
    if n_dims < 1:
        raise UsageError("--dim must be >= 1")
    if name == "rosenbrock" and n_dims < 2:
        raise UsageError("rosenbrock needs --dim >= 2")
    b = parse_bounds(bounds, n_dims)
    return {"rosenbrock": rosenbrock, "griewank": griewank, "quadratic": quadratic}[name](
        n_dims, b)


def rhc_config(args, pop: int | None = None) -> RhcConfig:
    try:
        descent = DescentConfig(grad_tol=args.grad_tol, max_iters=args.max_iters)
        return RhcConfig(population=args.pop if pop is None else pop, seed=args.seed,
                         descent=descent)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def alphas(args) -> tuple[float, ...]:
    vals = tuple(parse_floats(args.alpha))
    for a in vals:
        try:
            ConfidenceSpec(a)
        except ValueError as exc:
            raise UsageError(f"--alpha {a}: {exc}") from None
    return vals


def descent_config_dict(args) -> dict:
    return {"grad_tol": args.grad_tol, "max_iters": args.max_iters}


# ---------------------------------------------------------------------------
# subcommands; each returns (primary output text, manifest without timing)


def cmd_analyze(args) -> tuple[str, dict]:
    n = 1 if args.function.startswith("cosine") and args.dim is None else (args.dim or 2)
    spec = build_objective(args.function, n, args.bounds, args.basins)
    config = rhc_config(args)
    al = alphas(args)
    table = run_rhc(spec, config, workers=args.workers)
    report = estimate_entropy(table, al)
    out = report_dict(report)
    if table.failures:
        both = cluster_minima(table.descents, spec, config, include_failures=True)
        out["ce_hat_failures_clustered"] = estimate_entropy(both, al).c_e_hat
        print(f"{table.failures} of {table.population} descents did not converge; "
              f"ce_hat = {fmt(report.c_e_hat)} with failures excluded, "
              f"{fmt(out['ce_hat_failures_clustered'])} with failures clustered",
              file=sys.stderr)
    manifest = {
        "command": "analyze",
        "config": {"function": args.function, "dim": n,
                   "bounds": [spec.bounds.lower.tolist(), spec.bounds.upper.tolist()],
                   "basins": args.basins if args.function.startswith("cosine") else None,
                   "pop": args.pop, "alpha": list(al), **descent_config_dict(args)},
        "seed": args.seed,
        "version": __version__,
        "evaluations": spec.evaluations,
    }
    out["manifest"] = manifest
    return to_json(out) + "\n", manifest


def cmd_sweep(args) -> tuple[str, dict]:
    dims = parse_range(args.dims)
    pops = parse_range(args.pops)
    rows, evals = [], 0
    for K in pops:
        for n in dims:
            spec = build_objective(args.function, n, args.bounds, args.basins)
            table = run_rhc(spec, rhc_config(args, K), workers=args.workers)
            report = estimate_entropy(table)
            rows.append((n, K, report.c_e_hat, report.delta, table.failures))
            evals += spec.evaluations
    manifest = {
        "command": "sweep",
        "config": {"function": args.function, "dims": dims, "pops": pops,
                   "bounds": args.bounds, **descent_config_dict(args)},
        "seed": args.seed, "version": __version__, "evaluations": evals,
    }
    return csv_text(SWEEP_HEADER, rows), manifest


def cmd_condition(args) -> tuple[str, dict]:
    dims = parse_range(args.dims)
    if min(dims) < 2:
        raise UsageError("condition numbers need n_dims >= 2")
    rows = [(n, hessian_condition_number(n)) for n in dims]
    manifest = {"command": "condition", "config": {"dims": dims}, "seed": None,
                "version": __version__, "evaluations": 0}
    return csv_text(CONDITION_HEADER, rows), manifest


def cmd_slice(args) -> tuple[str, dict]:
    n = 1 if args.function.startswith("cosine") and args.dim is None else (args.dim or 2)
    spec = build_objective(args.function, n, args.bounds, args.basins)
    try:
        pts = slice_objective(spec, args.mode, args.axis_index, args.samples)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    manifest = {"command": "slice",
                "config": {"function": args.function, "dim": n, "mode": args.mode,
                           "axis_index": args.axis_index, "samples": args.samples,
                           "bounds": args.bounds, "basins": args.basins},
                "seed": None, "version": __version__, "evaluations": spec.evaluations}
    return csv_text(SLICE_HEADER, pts), manifest


def _problem_config(args) -> dict:
    return {"sources": args.sources, "channels": args.channels, "noise": args.noise,
            "max_static": args.max_static, "sample_rate": args.sample_rate,
            "samples": args.samples, "peak_frequency": args.peak_frequency,
            "reflectors": args.reflectors, "zero_statics": args.zero_statics}


def _generate(args, geometry: StaticsGeometry) -> StaticsProblem:
    try:
        return generate_problem(
            geometry, seed=args.problem_seed,
            wavelet=WaveletParams(args.peak_frequency, args.reflectors),
            noise_level=args.noise, max_static=args.max_static,
            sample_rate=args.sample_rate, n_samples=args.samples,
            zero_statics=args.zero_statics)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_statics_gen(args) -> tuple[str, dict]:
    if args.out is None:
        raise UsageError("statics-gen needs --out for the binary trace file")
    problem = _generate(args, StaticsGeometry(args.sources, args.channels))
    path, side = write_problem(problem, args.out)
    geom = problem.geometry
    summary = {"traces": geom.n_traces, "receivers": geom.n_receivers,
               "unknowns": geom.n_unknowns, "file": path.name, "sidecar": side.name}
    manifest = {"command": "statics-gen", "config": _problem_config(args),
                "seed": args.problem_seed, "version": __version__, "evaluations": 0}
    return to_json(summary) + "\n", manifest


def load_problem(args) -> StaticsProblem:
    if args.input is not None:
        try:
            return read_problem(args.input)
        except (OSError, ValueError) as exc:
            raise RuntimeError(f"cannot read {args.input}: {exc}") from None
    if args.geometry == "three-traces":
        geometry = StaticsGeometry.three_traces()
    else:
        geometry = StaticsGeometry(args.sources, args.channels)
    return _generate(args, geometry)


def _problem_manifest(args) -> dict:
    if args.input is not None:
        return {"input": str(args.input)}
    return {"geometry": args.geometry, "problem_seed": args.problem_seed,
            **_problem_config(args)}


def cmd_statics_analyze(args) -> tuple[str, dict]:
    if args.level < 0:
        raise UsageError("--level must be >= 0")
    problem = load_problem(args)
    schedule = SmoothingSchedule(args.level, args.base_sigma)
    spec = problem.objective(schedule.sigma(args.level))
    config = rhc_config(args)
    table = run_rhc(spec, config, workers=args.workers)
    report = estimate_entropy(table, alphas(args))
    out = report_dict(report)
    best = table.minima[0].representative
    s, r = problem.geometry.unpack(best * problem.dt)
    out["best_recovery_rms"] = score_recovery(problem, s, r)
    manifest = {"command": "statics-analyze",
                "config": {**_problem_manifest(args), "level": args.level,
                           "base_sigma": args.base_sigma, "pop": args.pop,
                           **descent_config_dict(args)},
                "seed": args.seed, "version": __version__,
                "evaluations": spec.evaluations}
    out["manifest"] = manifest
    return to_json(out) + "\n", manifest


def cmd_mrhc(args) -> tuple[str, dict]:
    problem = load_problem(args)
    try:
        schedule = SmoothingSchedule(args.levels, args.base_sigma)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    config = rhc_config(args)
    base = {**_problem_manifest(args), "levels": args.levels,
            "base_sigma": args.base_sigma, "pop": args.pop, **descent_config_dict(args)}
    if args.chain:
        results = run_mrhc(problem, schedule, config, workers=args.workers)
        levels = []
        for res in results:
            best = res.table.minima[0].representative
            s, r = problem.geometry.unpack(best * problem.dt)
            levels.append({"level": res.level, "sigma": res.sigma, "starts": res.starts,
                           "n_hat": res.table.n_hat, "failures": res.table.failures,
                           "ce_hat": res.report.c_e_hat, "best_value": float(res.table.values[0]),
                           "best_recovery_rms": score_recovery(problem, s, r)})
        manifest = {"command": "mrhc", "config": {**base, "chain": True},
                    "seed": args.seed, "version": __version__,
                    "evaluations": sum(res.evaluations for res in results)}
        return to_json({"levels": levels, "manifest": manifest}) + "\n", manifest
    if args.repeats < 2:
        raise UsageError("--repeats must be >= 2")
    stats = level_complexity_experiment(problem, schedule, config, args.repeats,
                                        workers=args.workers)
    manifest = {"command": "mrhc", "config": {**base, "repeats": args.repeats},
                "seed": args.seed, "version": __version__,
                "evaluations": sum(s.evaluations for s in stats)}
    return stats_csv(stats), manifest


# ---------------------------------------------------------------------------
# parser


def _add_run_flags(p: argparse.ArgumentParser, pop: int = 1000) -> None:
    p.add_argument("--pop", type=int, default=pop, help="random starts K")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1,
                   help="descent threads; never changes results")
    p.add_argument("--grad-tol", type=float, default=1e-6)
    p.add_argument("--max-iters", type=int, default=None,
                   help="descent iteration cap (default 200 * dimension)")


def _add_function_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--function", required=True, choices=FUNCTIONS)
    p.add_argument("--bounds", default=None,
                   help="lo:hi for all dimensions or a comma list of lo:hi")
    p.add_argument("--basins", type=int, default=9, help="cosine functions only")


def _add_problem_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", type=Path, default=None,
                   help="trace file from statics-gen; otherwise one is generated")
    p.add_argument("--geometry", choices=("full", "three-traces"), default="full")
    p.add_argument("--problem-seed", type=int, default=0)
    _add_generator_flags(p)


def _add_generator_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sources", type=int, default=20)
    p.add_argument("--channels", type=int, default=16)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--max-static", type=float, default=0.040, help="seconds")
    p.add_argument("--sample-rate", type=float, default=0.004, help="seconds")
    p.add_argument("--samples", type=int, default=512)
    p.add_argument("--peak-frequency", type=float, default=25.0)
    p.add_argument("--reflectors", type=int, default=12)
    p.add_argument("--zero-statics", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="topography", allow_abbrev=False,
        description="Random hill climbing and landscape complexity estimates.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_, allow_abbrev=False)
        p.set_defaults(handler=func)
        p.add_argument("--out", type=Path, default=None)
        return p

    p = add("analyze", cmd_analyze, "complexity report for one objective (JSON)")
    _add_function_flags(p)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--alpha", default="0.10,0.05", help="comma list of significance levels")
    _add_run_flags(p)

    p = add("sweep", cmd_sweep, "complexity over dimensions and populations (CSV)")
    _add_function_flags(p)
    p.add_argument("--dims", required=True, help="a:b inclusive or comma list")
    p.add_argument("--pops", default="500,1000")
    _add_run_flags(p)

    p = add("condition", cmd_condition, "Rosenbrock Hessian condition numbers (CSV)")
    p.add_argument("--dims", default="2:100")

    p = add("slice", cmd_slice, "objective along a line (CSV)")
    _add_function_flags(p)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--mode", choices=("diagonal", "axis"), default="diagonal")
    p.add_argument("--axis-index", type=int, default=0)
    p.add_argument("--samples", type=int, default=201)

    p = add("statics-gen", cmd_statics_gen, "write a synthetic trace file")
    p.add_argument("--problem-seed", type=int, default=0)
    _add_generator_flags(p)

    p = add("statics-analyze", cmd_statics_analyze,
            "complexity report for the statics objective at one smoothing level (JSON)")
    _add_problem_flags(p)
    p.add_argument("--level", type=int, default=0)
    p.add_argument("--base-sigma", type=float, default=1.0)
    p.add_argument("--alpha", default="0.10,0.05")
    _add_run_flags(p, pop=200)

    p = add("mrhc", cmd_mrhc,
            "per-level complexity (CSV), or the coarse-to-fine chain with --chain (JSON)")
    _add_problem_flags(p)
    p.add_argument("--levels", type=int, default=5)
    p.add_argument("--base-sigma", type=float, default=1.0)
    p.add_argument("--repeats", type=int, default=8)
    p.add_argument("--chain", action="store_true")
    _add_run_flags(p, pop=200)
    return parser


def _write(text: str, manifest: dict, out: Path | None, wall: float, command: str) -> None:
    full = {**manifest, "wall_time_s": wall}
    if out is None:
        sys.stdout.write(text)
        print(to_json(full, indent=None), file=sys.stderr)
        return
    # statics-gen has already written its trace file to --out
    if command == "statics-gen":
        sys.stdout.write(text)
    else:
        out.write_text(text)
    out.with_name(out.name + ".manifest.json").write_text(to_json(full) + "\n")


def _join_negative_values(argv: list[str]) -> list[str]:
    """``--bounds -10:10`` would read ``-10:10`` as a flag; glue such values
    onto their option."""
    out: list[str] = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if (tok in ("--bounds", "--dims") and i + 1 < len(argv)
                and argv[i + 1].startswith("-") and not argv[i + 1].startswith("--")):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = _join_negative_values(list(sys.argv[1:] if argv is None else argv))
    args = parser.parse_args(argv)  # exits with 2 on malformed flags
    handler: Callable = args.handler
    if getattr(args, "workers", 1) < 1:
        parser.error("--workers must be >= 1")
    start = time.perf_counter()
    try:
        text, manifest = handler(args)
        _write(text, manifest, args.out, time.perf_counter() - start, args.command)
    except (UsageError, ValueError) as exc:
        parser.error(str(exc))
    except (EmptyBasinTable, EvaluationFault, RuntimeError, OSError) as exc:
        print(f"topography: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
