"""Acceptance criteria, one test each.

Every criterion is a function returning ``(ok, detail)``.  The tests record
the outcome and elapsed time in ``RESULTS``; ``conftest.py`` prints one
PASS/FAIL line per criterion at the end of the run.  The module can also be
executed directly: ``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import contextlib
import io
import json
import math
import time

import numpy as np
import pytest

from topography.cli import main
from topography.confidence import (
    basin_probability_interval,
    error_bound_from,
    min_population_for,
    multinomial_oracle,
    theoretical_moments,
)
from topography.mra import SmoothingSchedule, level_complexity_experiment, smooth_objective
from topography.objective import rosenbrock_hessian
from topography.rhc import RhcConfig, run_rhc
from topography.statics import StaticsGeometry, generate_problem, stacking_power

RESULTS: dict[int, tuple[bool, str, float]] = {}

TITLES = {
    1: "equal-basin entropy is ln 9",
    2: "unimodal quadratic gives exactly zero",
    3: "basin probability interval regression",
    4: "minimum population regression",
    5: "error bound regression",
    6: "frequency oracle moments",
    7: "entropy oracle mean and variance",
    8: "Rosenbrock condition-number asymptote",
    9: "Griewank dimension profile",
    10: "statics problem integrity",
    11: "multi-resolution simplification",
    12: "byte-identical reruns across worker counts",
}


def cli(argv: list[str]) -> tuple[int, str]:
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        try:
            code = main(argv)
        except SystemExit as exc:
            code = exc.code
    return code, out.getvalue()


def parse_csv(text: str) -> list[dict[str, float]]:
    lines = text.strip().splitlines()
    head = lines[0].split(",")
    return [dict(zip(head, map(float, line.split(",")))) for line in lines[1:]]


# --- criteria ---------------------------------------------------------------

def criterion_1():
    code, out = cli(["analyze", "--function", "cosine-equal", "--basins", "9", "--pop", "2000"])
    ce = json.loads(out)["ce_hat"]
    return code == 0 and abs(ce - math.log(9)) <= 0.1, f"ce_hat={ce:.4f}, ln 9={math.log(9):.4f}"


def criterion_2():
    details = []
    ok = True
    for n in (1, 2, 10, 50):
        start = time.perf_counter()
        code, out = cli(["analyze", "--function", "quadratic", "--dim", str(n), "--pop", "200"])
        elapsed = time.perf_counter() - start
        rep = json.loads(out)
        ok &= code == 0 and rep["ce_hat"] == 0.0 and rep["failures"] == 0 and elapsed < 5
        details.append(f"N={n}: ce_hat={rep['ce_hat']}, failures={rep['failures']}, "
                       f"{elapsed:.1f}s")
    return ok, "; ".join(details)


def criterion_3():
    iv = basin_probability_interval(100, 520, 0.05)
    hw10 = basin_probability_interval(100, 520, 0.10).half_width
    ok = (abs(iv.x - 0.1923) <= 1e-4 and abs(iv.lower - 0.158) <= 1e-3
          and abs(iv.upper - 0.226) <= 1e-3 and abs(hw10 - 0.0285) <= 5e-4)
    return ok, f"x={iv.x:.4f}, [{iv.lower:.4f}, {iv.upper:.4f}], half-width(0.10)={hw10:.4f}"


def criterion_4():
    k = min_population_for(0.01)
    return k == 500, f"K={k}"


def criterion_5():
    b = error_bound_from(1.86, -13.62, 6.37, 1000)
    return abs(b.delta - 0.33) <= 0.01, f"delta={b.delta:.4f}"


P6 = np.array([0.6, 0.3, 0.1])


def criterion_6():
    K, R = 100, 100_000
    s = multinomial_oracle(P6, np.zeros(3), K, R, seed=0)
    var = P6 * (1 - P6) / K
    mean_ok = np.all(np.abs(s.mean_x - P6) <= 3 * np.sqrt(var / R))
    rel = np.abs(s.var_x / var - 1)
    return bool(mean_ok and np.all(rel <= 0.05)), (
        f"mean_x={np.round(s.mean_x, 5).tolist()}, var rel err={np.round(rel, 4).tolist()}")


def criterion_7():
    K, R = 100, 100_000
    y = np.array([0.0, 1.0, 2.0])
    s = multinomial_oracle(P6, y, K, R, seed=0)
    m = theoretical_moments(P6, y, K)
    mc_sigma = math.sqrt(s.var_ce / R)
    mean_ok = abs(s.mean_ce - s.exact_ce) <= 3 * mc_sigma + 2 / K
    rel = abs(s.var_ce / m["var_ce"] - 1)
    return mean_ok and rel <= 0.15, (
        f"mean={s.mean_ce:.5f} vs C_e={s.exact_ce:.5f} (allowance "
        f"{3 * mc_sigma + 2 / K:.5f}); var={s.var_ce:.6f} vs linearised "
        f"{m['var_ce']:.6f} (rel err {rel:.2f}); normalised-c variance "
        f"{m['var_ce_normalized']:.6f}")


def criterion_8():
    code, out = cli(["condition", "--dims", "2:100"])
    rows = parse_csv(out)
    k = np.array([r["condition_number"] for r in rows])
    n = np.array([int(r["n_dims"]) for r in rows])
    tail = k[n >= 40]
    steps = np.diff(tail)
    asym_ok = (np.all(k >= 1) and np.all(np.abs(steps) < 0.01 * tail[1:])
               and np.all(np.diff(np.abs(steps)) <= 0))
    ev = np.linalg.eigvalsh(rosenbrock_hessian(np.ones(2)).dense())
    oracle = ev[-1] / ev[0]
    n2_ok = abs(k[0] - 2506.6) <= 0.5 and abs(k[0] - oracle) <= 1e-6 * oracle
    return bool(code == 0 and asym_ok and n2_ok), (
        f"asymptote {'ok' if asym_ok else 'FAILED'}; N=2 value {k[0]:.4f}, "
        f"eigenvalue oracle {oracle:.4f}, target 2506.6 +- 0.5")


def criterion_9():
    code, out = cli(["sweep", "--function", "griewank", "--dims", "1:20", "--pops", "500,1000",
                     "--bounds", "-10:10"])
    rows = parse_csv(out)
    curves = {}
    for r in rows:
        curves.setdefault(int(r["pop"]), []).append((r["ce_hat"], r["delta"]))
    ok = code == 0
    detail = []
    for K, vals in curves.items():
        ce = np.array([v[0] for v in vals])
        peak = int(np.argmax(ce)) + 1
        falls = np.all(np.diff(ce[peak - 1:]) < 0)
        ok &= 6 <= peak <= 12 and bool(falls)
        detail.append(f"K={K}: peak N*={peak} ({ce.max():.2f}), decreasing after: {bool(falls)}")
    a, b = np.array(curves[500]), np.array(curves[1000])
    gap = np.abs(a[:, 0] - b[:, 0])
    band = 2 * np.hypot(a[:, 1], b[:, 1])
    agree = bool(np.all(gap <= band))
    detail.append(f"curves within combined 2-delta band at every N: {agree}")
    return ok and agree, "; ".join(detail)


def criterion_10():
    problem = generate_problem(StaticsGeometry(), seed=0)
    g = problem.geometry
    counts_ok = (g.n_traces, g.n_receivers, g.n_unknowns) == (320, 35, 55)
    s = problem.traces.true_source_statics
    r = problem.traces.true_receiver_statics
    spec = problem.objective()
    scale = spec.parameters["scale"]
    best = stacking_power(problem, s, r)
    rng = np.random.default_rng(0)
    gauge = max(abs(stacking_power(problem, s + t, r - t) - best) / scale
                for t in rng.uniform(-0.04, 0.04, 10))
    beaten = sum(stacking_power(problem, s + rng.normal(0, 0.004, s.size),
                                r + rng.normal(0, 0.004, r.size)) >= best
                 for _ in range(1000))
    return counts_ok and gauge <= 1e-10 and beaten == 0, (
        f"traces/receivers/unknowns={g.n_traces}/{g.n_receivers}/{g.n_unknowns}; "
        f"max gauge change {gauge:.1e}; perturbations not worse than truth: {beaten}/1000")


def criterion_11():
    sched = SmoothingSchedule(5)
    small = []
    for seed in range(10):
        p = generate_problem(StaticsGeometry.three_traces(), seed=seed)
        n0 = run_rhc(smooth_objective(p, 0, sched), RhcConfig(200, seed)).n_hat
        n5 = run_rhc(smooth_objective(p, 5, sched), RhcConfig(200, seed)).n_hat
        small.append((n0, n5))
    small_ok = all(n5 <= n0 for n0, n5 in small)
    problem = generate_problem(StaticsGeometry(), seed=0)
    stats = level_complexity_experiment(problem, sched, RhcConfig(100, 0), repeats=8)
    ce = np.array([s.mean_ce for s in stats])
    big_ok = bool(np.ptp(ce) > 0 and int(np.argmin(ce)) > 0)
    return small_ok and big_ok, (
        f"three-trace (level 0, level 5) n_hat: {small}; 55-D mean ce per level: "
        f"{np.round(ce, 3).tolist()}, minimum at level {int(np.argmin(ce))}")


def criterion_12(tmp_dir):
    runs = [
        ["analyze", "--function", "griewank", "--dim", "5", "--pop", "700"],
        ["sweep", "--function", "griewank", "--dims", "1:4", "--pops", "300"],
        ["condition", "--dims", "2:30"],
        ["slice", "--function", "griewank", "--dim", "4", "--samples", "51"],
        ["statics-gen", "--sources", "5", "--channels", "4"],
        ["statics-analyze", "--geometry", "three-traces", "--pop", "300"],
        ["mrhc", "--geometry", "three-traces", "--pop", "100", "--repeats", "2"],
    ]
    bad = []
    for n, argv in enumerate(runs):
        blobs = []
        for k, workers in enumerate((1, 1, 3)):
            out = tmp_dir / f"{n}_{k}.out"
            extra = [] if argv[0] in ("condition", "slice", "statics-gen") else [
                "--workers", str(workers)]
            code, _ = cli(argv + extra + ["--out", str(out)])
            blob = out.read_bytes() if code == 0 else b"<failed>"
            if argv[0] == "statics-gen":
                blob += (tmp_dir / f"{n}_{k}.out.json").read_bytes()
            blobs.append(blob)
        if len(set(blobs)) != 1 or blobs[0] == b"<failed>":
            bad.append(argv[0])
    return not bad, f"{len(runs)} commands compared; differing: {bad or 'none'}"


RUNTIME_LIMIT = {1: 5, 6: 30, 7: 60, 8: 5, 9: 600, 10: 60, 11: 1800}


def check(n: int, fn, *args):
    start = time.perf_counter()
    ok, detail = fn(*args)
    elapsed = time.perf_counter() - start
    limit = RUNTIME_LIMIT.get(n)
    if limit is not None and elapsed > limit:
        ok = False
        detail += f"; runtime {elapsed:.1f}s exceeds {limit}s"
    RESULTS[n] = (bool(ok), detail, elapsed)
    assert ok, detail


def test_criterion_01_equal_basin_entropy():
    check(1, criterion_1)


def test_criterion_02_unimodal_zero():
    check(2, criterion_2)


def test_criterion_03_interval_regression():
    check(3, criterion_3)


def test_criterion_04_population_regression():
    check(4, criterion_4)


def test_criterion_05_error_bound_regression():
    check(5, criterion_5)


def test_criterion_06_frequency_oracle():
    check(6, criterion_6)


def test_criterion_07_entropy_oracle():
    check(7, criterion_7)


def test_criterion_08_condition_asymptote():
    check(8, criterion_8)


@pytest.mark.slow
def test_criterion_09_griewank_profile():
    check(9, criterion_9)


def test_criterion_10_statics_integrity():
    check(10, criterion_10)


@pytest.mark.slow
def test_criterion_11_mrhc_simplification():
    check(11, criterion_11)


def test_criterion_12_determinism(tmp_path):
    check(12, criterion_12, tmp_path)


def summary_lines() -> list[str]:
    lines = []
    for n in sorted(RESULTS):
        ok, detail, elapsed = RESULTS[n]
        lines.append(f"{'PASS' if ok else 'FAIL'} criterion {n:2d} ({TITLES[n]}, "
                     f"{elapsed:.1f}s): {detail}")
    return lines


if __name__ == "__main__":
    import pathlib
    import tempfile

    fns = {n: globals()[f"criterion_{n}"] for n in TITLES}
    with tempfile.TemporaryDirectory() as d:
        for n, fn in fns.items():
            try:
                check(n, fn, *([pathlib.Path(d)] if n == 12 else []))
            except AssertionError:
                pass
    print("\n".join(summary_lines()))
