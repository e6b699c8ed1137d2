import json
import math
from importlib import resources

import jsonschema
import pytest
from hypothesis import given
from hypothesis import strategies as st

from topography.cli import fmt, main


@pytest.fixture(scope="module")
def schema():
    text = resources.files("topography").joinpath("schemas/entropy_report.schema.json").read_text()
    return json.loads(text)


def run(argv, capsys):
    """Run the CLI in-process; returns (exit code, stdout, stderr)."""
    try:
        code = main(argv)
    except SystemExit as exc:
        code = exc.code
    out, err = capsys.readouterr()
    return code, out, err


def run_to(tmp_path, name, argv):
    out = tmp_path / name
    assert main(argv + ["--out", str(out)]) == 0
    return out.read_bytes()


def test_analyze_report_validates(capsys, schema):
    code, out, err = run(["analyze", "--function", "cosine-equal", "--pop", "300"], capsys)
    assert code == 0
    rep = json.loads(out)
    jsonschema.validate(rep, schema)
    assert rep["n_hat"] == 9 and rep["failures"] == 0
    assert abs(rep["ce_hat"] - math.log(9)) < 0.1
    assert set(rep["intervals"]) == {"0.90", "0.95"}
    assert "wall_time_s" in json.loads(err.strip().splitlines()[-1])
    assert "wall_time_s" not in rep["manifest"]


def test_quadratic_report_is_exactly_zero(capsys, schema):
    code, out, _ = run(["analyze", "--function", "quadratic", "--dim", "5", "--pop", "50"],
                       capsys)
    rep = json.loads(out)
    jsonschema.validate(rep, schema)
    assert code == 0 and rep["ce_hat"] == 0 and rep["n_hat"] == 1 and rep["delta"] == 0


def test_failures_reported_both_ways(capsys, schema):
    code, out, err = run(["analyze", "--function", "rosenbrock", "--dim", "6", "--pop", "20",
                          "--max-iters", "80"], capsys)
    assert code == 0
    rep = json.loads(out)
    jsonschema.validate(rep, schema)
    assert rep["failures"] > 0
    assert "ce_hat_failures_clustered" in rep
    assert "did not converge" in err


def test_sidecar_manifest_holds_wall_time(tmp_path):
    out = tmp_path / "r.json"
    assert main(["analyze", "--function", "griewank", "--dim", "2", "--pop", "50",
                 "--out", str(out)]) == 0
    side = json.loads((tmp_path / "r.json.manifest.json").read_text())
    assert side["wall_time_s"] >= 0
    assert side["seed"] == 0 and side["command"] == "analyze"


def test_sweep_rows(capsys):
    code, out, _ = run(["sweep", "--function", "griewank", "--dims", "1:20", "--pops", "20,30",
                        "--bounds", "-10:10"], capsys)
    lines = out.splitlines()
    assert code == 0 and lines[0] == "n_dims,pop,ce_hat,delta,failures"
    assert len(lines) == 41
    assert lines[1].startswith("1,20,") and lines[-1].startswith("20,30,")


def test_condition_csv(capsys):
    code, out, _ = run(["condition", "--dims", "2:5"], capsys)
    lines = out.splitlines()
    assert code == 0 and lines[0] == "n_dims,condition_number" and len(lines) == 5
    assert float(lines[1].split(",")[1]) == pytest.approx(2508.0096, abs=1e-3)


def test_slice_csv_round_trips_values(capsys):
    from topography.objective import griewank, slice_objective
    code, out, _ = run(["slice", "--function", "griewank", "--dim", "3", "--samples", "11",
                        "--mode", "axis", "--axis-index", "2"], capsys)
    lines = out.splitlines()
    assert code == 0 and lines[0] == "t,f" and len(lines) == 12
    expect = slice_objective(griewank(3), "axis", 2, 11)
    for line, (t, f) in zip(lines[1:], expect):
        a, b = (float(s) for s in line.split(","))
        assert (a, b) == (t, f)


def test_statics_gen_is_byte_deterministic(tmp_path, capsys):
    args = ["statics-gen", "--sources", "4", "--channels", "3", "--problem-seed", "2"]
    code, out, _ = run(args + ["--out", str(tmp_path / "a.bin")], capsys)
    assert code == 0 and json.loads(out)["unknowns"] == 10
    run(args + ["--out", str(tmp_path / "b.bin")], capsys)
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
    assert (tmp_path / "a.bin.json").read_text() == (tmp_path / "b.bin.json").read_text()


def test_statics_analyze_from_file(tmp_path, capsys, schema):
    run(["statics-gen", "--sources", "3", "--channels", "3", "--out", str(tmp_path / "p.bin")],
        capsys)
    code, out, _ = run(["statics-analyze", "--input", str(tmp_path / "p.bin"), "--pop", "20"],
                       capsys)
    assert code == 0
    rep = json.loads(out)
    jsonschema.validate(rep, schema)
    assert rep["best_recovery_rms"] >= 0


def test_mrhc_csv_has_a_row_per_level(capsys):
    code, out, _ = run(["mrhc", "--geometry", "three-traces", "--pop", "30", "--repeats", "2"],
                       capsys)
    lines = out.splitlines()
    assert code == 0 and lines[0] == "level,mean_ce,std_ce,n_repeats" and len(lines) == 7


def test_mrhc_chain_json(capsys):
    code, out, _ = run(["mrhc", "--geometry", "three-traces", "--pop", "30", "--chain"], capsys)
    levels = json.loads(out)["levels"]
    assert code == 0 and [lv["level"] for lv in levels] == [5, 4, 3, 2, 1, 0]


@pytest.mark.parametrize("argv", [
    ["analyze", "--function", "sphere"],
    ["analyze", "--function", "griewank", "--bounds", "5:1"],
    ["analyze", "--function", "griewank", "--alpha", "1.5"],
    ["analyze", "--function", "cosine-equal", "--dim", "3"],
    ["analyze", "--function", "griewank", "--workers", "0"],
    ["sweep", "--function", "griewank", "--dims", "5:2"],
    ["condition", "--dims", "1:4"],
    ["statics-gen"],
    ["statics-analyze", "--max-static", "0.9", "--pop", "5"],
])
def test_usage_errors_exit_2(argv, capsys):
    code, _, err = run(argv, capsys)
    assert code == 2 and "error" in err


def test_runtime_failures_exit_3(tmp_path, capsys):
    code, _, err = run(["statics-analyze", "--input", str(tmp_path / "missing.bin")], capsys)
    assert code == 3 and "cannot read" in err
    code, _, err = run(["analyze", "--function", "rosenbrock", "--dim", "8", "--pop", "5",
                        "--max-iters", "1"], capsys)
    assert code == 3 and "descents failed" in err


@pytest.mark.parametrize("argv, name", [
    (["analyze", "--function", "griewank", "--dim", "4", "--pop", "600"], "a.json"),
    (["sweep", "--function", "griewank", "--dims", "2:4", "--pops", "300"], "s.csv"),
    (["statics-analyze", "--geometry", "three-traces", "--pop", "300"], "t.json"),
    (["mrhc", "--geometry", "three-traces", "--pop", "300", "--repeats", "2"], "m.csv"),
])
def test_outputs_identical_across_runs_and_workers(tmp_path, argv, name):
    a = run_to(tmp_path, "1" + name, argv + ["--workers", "1"])
    b = run_to(tmp_path, "2" + name, argv + ["--workers", "1"])
    c = run_to(tmp_path, "3" + name, argv + ["--workers", "4"])
    assert a == b == c


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_format_round_trips(x):
    assert float(fmt(x)) == x
