import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from igpr.cli import main
from igpr.io import load_dataset, read_generic_csv, write_generic_csv
from igpr.manifolds import SPD, Sphere
from igpr.scenarios import ScenarioSpec, generate_scenario

FIXTURES = Path(__file__).parent / "fixtures"


def test_usage_errors(capsys):
    assert main([]) == 1
    assert main(["simulate", "--n", "ten"]) == 1
    assert main(["fit"]) == 1
    assert "usage" in capsys.readouterr().err


def test_help_exits_cleanly():
    assert main(["--help"]) == 0


def test_missing_file_is_data_error(tmp_path):
    assert main(["fit", "--data", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "m.json")]) == 2


def test_bad_config_is_usage_error(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text("{not json")
    assert main(["simulate", "--config", str(cfg)]) == 1
    cfg.write_text(json.dumps({"scenario": {"colour": "red"}}))
    assert main(["simulate", "--config", str(cfg)]) == 1
    assert main(["simulate", "--n", "3"]) == 1
    assert main(["cov-report", "--reps", "0"]) == 1


def test_simulate_writes_report_and_csv(tmp_path):
    out = tmp_path / "r.json"
    code = main(["simulate", "--scenario", "s2", "--n", "12", "--reps", "2", "--seed", "3",
                 "--methods", "igpr,mgpr", "--out", str(out)])
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["config"]["scenario"]["name"] == "s2"
    assert set(rep["results"]) == {"igpr", "mgpr"}
    rows = list(csv.DictReader(open(out.with_suffix(".csv"))))
    assert len(rows) == 4 and all(r["status"] == "ok" for r in rows)


def test_simulate_from_config(tmp_path):
    cfg = tmp_path / "c.json"
    out = tmp_path / "r.json"
    cfg.write_text(json.dumps({
        "scenario": {"name": "s1", "n": 12, "reps": 1, "theta": [0.3, 0.6, 0.8]},
        "methods": ["igpr"],
        "method_options": {"igpr": {"n_restarts": 2}},
        "out": str(out),
    }))
    assert main(["simulate", "--config", str(cfg)]) == 0
    rep = json.loads(out.read_text())
    assert rep["config"]["scenario"]["theta"] == [0.3, 0.6, 0.8]
    assert rep["config"]["method_options"] == {"igpr": {"n_restarts": 2}}


def test_numerical_abort_exit_code(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"method_options": {"igpr": {"theta": -1.0, "optimize": False}}}))
    code = main(["simulate", "--config", str(cfg), "--n", "10", "--reps", "1", "--methods", "igpr",
                 "--out", str(tmp_path / "r.json")])
    assert code == 3


@pytest.mark.parametrize("method", ["igpr", "wgpr-approx", "mgpr"])
def test_fit_predict_eval_interpolates(tmp_path, method):
    ds = generate_scenario(ScenarioSpec(n=12), 0)
    m = SPD(2)
    data = tmp_path / "d.csv"
    write_generic_csv(data, m, ds.X, ds.Y, ds.t)
    model, pred, res = tmp_path / "m.json", tmp_path / "p.csv", tmp_path / "e.json"
    assert main(["fit", "--data", str(data), "--manifold", "spd:2", "--method", method,
                 "--noise-var", "1e-12", "--fix-noise", "--theta", "0.01", "--no-optimize",
                 "--out", str(model)]) == 0
    assert main(["predict", "--model", str(model), "--inputs", str(data), "--out", str(pred)]) == 0
    assert main(["eval", "--pred", str(pred), "--truth", str(data), "--manifold", "spd:2",
                 "--out", str(res)]) == 0
    assert json.loads(res.read_text())["rmsge"] < 1e-6


def test_fit_flight_fixture_and_predict_generic_inputs(tmp_path):
    model, pred = tmp_path / "m.json", tmp_path / "p.csv"
    assert main(["fit", "--data", str(FIXTURES / "flight_synthetic.csv"), "--presmooth",
                 "--n-restarts", "2", "--out", str(model)]) == 0
    inputs = tmp_path / "x.csv"
    inputs.write_text("x1\n0.0\n0.5\n1.0\n")
    assert main(["predict", "--model", str(model), "--inputs", str(inputs), "--out", str(pred)]) == 0
    X, t, Y = read_generic_csv(pred, Sphere(2))
    assert Y.shape == (3, 3)
    ds = load_dataset(FIXTURES / "flight_synthetic.csv")
    assert Sphere(2).dist(Y[0], ds.Y[0]) < 0.01


def test_fit_amplitude_flag(tmp_path):
    model = tmp_path / "m.json"
    assert main(["fit", "--data", str(FIXTURES / "flight_synthetic.csv"), "--fit-amplitude",
                 "--n-restarts", "1", "--out", str(model)]) == 0
    amp = json.loads(model.read_text())["hyperparameters"]["amplitude"]
    assert amp != [1.0, 1.0]


def test_fit_dti_fixture(tmp_path):
    model = tmp_path / "m.json"
    assert main(["fit", "--data", str(FIXTURES / "dti_synthetic.csv"), "--method", "mgpr",
                 "--n-restarts", "1", "--out", str(model)]) == 0
    assert json.loads(model.read_text())["method"] == "mgpr"


def test_eval_length_mismatch(tmp_path):
    m = Sphere(2)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_generic_csv(a, m, [0.0, 1.0], [[1.0, 0, 0], [0, 1.0, 0]])
    write_generic_csv(b, m, [0.0], [[1.0, 0, 0]])
    assert main(["eval", "--pred", str(a), "--truth", str(b), "--manifold", "sphere:2"]) == 2
    assert main(["eval", "--pred", str(a), "--truth", str(b)]) == 1


def test_eval_example(tmp_path, capsys):
    m = Sphere(2)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_generic_csv(a, m, [0.0], [[1.0, 0, 0]])
    write_generic_csv(b, m, [0.0], [[0, 1.0, 0]])
    assert main(["eval", "--pred", str(a), "--truth", str(b), "--manifold", "sphere:2"]) == 0
    assert json.loads(capsys.readouterr().out)["rmsge"] == pytest.approx(np.pi / 2)


def test_cov_report(tmp_path):
    out = tmp_path / "cov.json"
    assert main(["cov-report", "--n", "30", "--reps", "1", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert len(rep["theta_mean"]) == 3


def test_console_script_entry_point():
    res = subprocess.run([sys.executable, "-m", "igpr.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "simulate" in res.stdout
