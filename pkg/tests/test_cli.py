import json
import shutil
import subprocess
import sys

import pytest

from moescale.cli import main
from moescale.fitting import Dataset1D, FitResult
from moescale.harness import REPORT_SCHEMA, SCATTER_SCHEMA
from moescale.pipeline import DesignReport, LawSet
from moescale.records import read_records, write_records
from moescale.region import GRID_SCHEMA, REGION_SCHEMA, SWEEP_SCHEMA, ExperimentGrid, RegionMap
from moescale.solver import FeasibleInterval, MacroTarget
from moescale.tables import VALIDATE_SCHEMA

TARGET = ["--scale", "1e18", "--m", "0.2672", "--mna", "8", "--nna", "20"]


def run(capsys, *argv):
    try:
        code = main([str(a) for a in argv])
    except SystemExit as exc:
        code = exc.code
    out, err = capsys.readouterr()
    return code, out, err


def csv_reingests(schema, text):
    assert write_records(schema, read_records(schema, text)) == text


def test_design_json(capsys, tmp_path):
    code, out, err = run(capsys, "design", "--compute", "1e20")
    assert code == 0
    rep = DesignReport.from_dict(json.loads(out))
    assert rep.to_json() + "\n" == out
    assert "warning:" in err and "warning" not in out.split('"warnings"')[0]


def test_design_text(capsys):
    code, out, err = run(capsys, "design", "--compute", "1e19", "--format", "text")
    assert code == 0 and "d=" in out and "warning:" in out and err == ""


def test_design_with_lawset_file(capsys, tmp_path):
    path = tmp_path / "laws.json"
    assert run(capsys, "lawset", "default", "--out", path)[0] == 0
    assert LawSet.from_json(path.read_text()).to_json() + "\n" == path.read_text()
    code, out, _ = run(capsys, "design", "--compute", "1e20", "--lawset", path)
    assert code == 0 and json.loads(out)["values"]["N/N_a"]["value"] == 22.0


def test_lawset_pipeline(capsys, tmp_path):
    runs = tmp_path / "runs"
    assert run(capsys, "lawset", "demo-runs", "--runs", runs)[0] == 0
    assert len(list(runs.glob("*.csv"))) == 12
    for f in runs.glob("*.csv"):
        assert Dataset1D.from_csv(f.read_text()).to_csv() == f.read_text()
    laws = tmp_path / "fitted.json"
    assert run(capsys, "lawset", "fit", "--runs", runs, "--out", laws)[0] == 0
    fitted = LawSet.from_json(laws.read_text())
    assert fitted.hidden_band is not None and fitted.to_json() + "\n" == laws.read_text()
    code, out, _ = run(capsys, "design", "--compute", "3e19", "--lawset", laws)
    assert code == 0 and json.loads(out)["values"]["d_opt"]["provenance"] == "user-fitted"


def test_feasible(capsys):
    code, out, err = run(capsys, "feasible", *TARGET)
    assert code == 0 and "median" in err
    data = json.loads(out)
    iv = FeasibleInterval.from_dict(data["interval"])
    assert MacroTarget.from_dict(data["target"]).to_dict() == data["target"]
    assert json.dumps({"target": data["target"], "interval": iv.to_dict()}, indent=2) + "\n" == out


def test_region_csv_and_json(capsys):
    args = ["region", "--scale", "3e20", "--m", "5.939", "--m-cells", "6", "--n-cells", "6"]
    code, out, _ = run(capsys, *args)
    assert code == 0
    csv_reingests(REGION_SCHEMA, out)
    code, js, _ = run(capsys, *args, "--format", "json")
    region = RegionMap.from_dict(json.loads(js))
    assert region.to_csv() == out
    assert json.dumps(region.to_dict(), indent=2) + "\n" == js


def test_grid_csv_and_json(capsys):
    code, out, _ = run(capsys, "grid", "--scale", "1e18", "--m-grid", "7,8", "--n-grid", "12,30")
    assert code == 0 and len(out.splitlines()) == 5
    csv_reingests(GRID_SCHEMA, out)
    code, js, _ = run(capsys, "grid", "--scale", "1e18", "--m-grid", "7,8", "--n-grid", "12,30",
                      "--format", "json")
    grid = ExperimentGrid.from_dict(json.loads(js))
    assert grid.to_csv() == out


def test_grid_lists_infeasible(capsys):
    code, out, err = run(capsys, "grid", "--scale", "1e18", "--m-grid", "6,8", "--n-grid", "20")
    assert code == 0 and "infeasible cell (6, 20)" in err
    last = read_records(GRID_SCHEMA, out)[-1]
    assert last["status"] == "infeasible: M/N_a must exceed 6, got 6.0"


def test_sweep(capsys):
    code, out, _ = run(capsys, "sweep-d", *TARGET)
    assert code == 0
    csv_reingests(SWEEP_SCHEMA, out)


def test_fit(capsys, tmp_path):
    data = tmp_path / "xy.csv"
    data.write_text(Dataset1D(tuple(range(7, 18)),
                              tuple(1 / (x - 6) + 0.01 * x for x in range(7, 18))).to_csv())
    code, out, _ = run(capsys, "fit", "--family", "inv-linear", "--data", data, "--tolerance", "0.001")
    assert code == 0
    res = FitResult.from_dict(json.loads(out))
    assert res.x_opt == pytest.approx(16.0, abs=1e-9) and res.band is not None
    assert json.dumps(res.to_dict(), indent=2) + "\n" == out


def test_validate(capsys, tmp_path):
    code, out, err = run(capsys, "validate")
    csv_reingests(VALIDATE_SCHEMA, out)
    assert len(out.splitlines()) == 668
    assert "667 rows" in err
    # The shipped tables contain rows beyond the 5% guard, so the check fails.
    assert code == 1


def test_validate_on_clean_tables(capsys, tmp_path):
    from moescale.tables import default_dir
    shutil.copy(default_dir() / "proxy_2.csv", tmp_path)
    code, out, err = run(capsys, "validate", "--tables", tmp_path, "--tolerance", "0.10")
    assert code == 0 and "0 beyond" in err


def test_harness(capsys, tmp_path):
    scatter = tmp_path / "scatter.csv"
    code, out, err = run(capsys, "harness", "--seed", "7", "--grid", "4x4", "--amp-fraction", "0.1",
                         "--scatter", scatter)
    assert code == 0 and "mean pearson" in err
    rows = read_records(REPORT_SCHEMA, out)
    assert [r["seed"] for r in rows] == [7, 8] and all(r["regret"] == 0 for r in rows)
    csv_reingests(REPORT_SCHEMA, out)
    csv_reingests(SCATTER_SCHEMA, scatter.read_text())
    code, out, _ = run(capsys, "harness", "--seeds", "1,2,3", "--grid", "4x4")
    assert [r["seed"] for r in read_records(REPORT_SCHEMA, out)] == [1, 2, 3]


def test_out_dir_env(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("MOESCALE_OUT_DIR", str(tmp_path))
    assert run(capsys, "lawset", "default", "--out", "sub/laws.json")[0] == 0
    assert (tmp_path / "sub" / "laws.json").exists()


@pytest.mark.parametrize("argv,code", [
    (["design", "--compute", "-5"], 2),
    (["feasible", "--scale", "1e18", "--m", "0.2672", "--mna", "5", "--nna", "20"], 2),
    (["feasible", "--scale", "7e18", "--m", "0.2672", "--mna", "8", "--nna", "20"], 2),
    (["region", "--scale", "1e18", "--m", "0.000001", "--m-cells", "4", "--n-cells", "4"], 2),
    (["lawset", "fit"], 4),
    (["fit", "--family", "quadratic", "--data", "/nonexistent.csv"], 4),
    (["design", "--compute"], 4),
    (["frobnicate"], 4),
    (["grid", "--scale", "1e18", "--m-grid", "a,b"], 4),
])
def test_exit_codes(capsys, argv, code):
    assert run(capsys, *argv)[0] == code


def test_fit_and_lawset_failures_exit_3(capsys, tmp_path):
    data = tmp_path / "xy.csv"
    data.write_text("x,y\n7,1\n8,2\n9,3\n")
    code, _, err = run(capsys, "fit", "--family", "power-law", "--data", data)
    assert code == 0
    one = tmp_path / "one"
    one.mkdir()
    (one / "mna_1e18.csv").write_text(Dataset1D((7, 8, 9, 11), (1, 0.9, 0.95, 1.1)).to_csv())
    code, _, err = run(capsys, "lawset", "fit", "--runs", one)
    assert code == 3 and "at least 2" in err
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    code, _, _ = run(capsys, "design", "--compute", "1e19", "--lawset", bad)
    assert code == 3


def test_console_script_subprocess():
    exe = shutil.which("moescale")
    cmd = [exe] if exe else [sys.executable, "-m", "moescale.cli"]
    out = subprocess.run([*cmd, "lawset", "default"], capture_output=True, text=True, check=True)
    assert LawSet.from_json(out.stdout).to_json() + "\n" == out.stdout
    bad = subprocess.run([*cmd, "--bogus"], capture_output=True, text=True)
    assert bad.returncode == 4
