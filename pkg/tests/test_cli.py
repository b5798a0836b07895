import json

import numpy as np
import pytest

from sdrate.cli import main
from sdrate.data import load_dataset


@pytest.fixture
def scenario(tmp_path):
    f = tmp_path / "s.json"
    f.write_text(json.dumps({"n": 80, "p": 30, "s_theta": 2, "s_beta": 2}))
    return f


@pytest.fixture
def data(tmp_path, scenario):
    out = tmp_path / "d.csv"
    assert main(["simulate", "--scenario", str(scenario), "--seed", "4", "--out", str(out)]) == 0
    return out


def test_simulate_writes_data_and_truth(tmp_path, data):
    ds = load_dataset(data)
    assert (ds.n, ds.p) == (80, 30)
    truth = json.loads((tmp_path / "d_truth.json").read_text())
    assert truth["tau_true"] == 0.0
    assert np.flatnonzero(truth["theta"]).tolist() == [0, 2]


def test_simulate_seed_is_reproducible(tmp_path, scenario, data):
    again = tmp_path / "e.csv"
    main(["simulate", "--scenario", str(scenario), "--seed", "4", "--out", str(again)])
    assert again.read_bytes() == data.read_bytes()


@pytest.mark.parametrize("method", ["sdr", "aipw", "arb"])
def test_estimate_methods(tmp_path, data, method):
    out = tmp_path / f"{method}.json"
    assert main(["estimate", "--data", str(data), "--method", method, "--out", str(out)]) == 0
    res = json.loads(out.read_text())
    assert res["method"] == method
    assert res["ci_lower"] <= res["tau_hat"] <= res["ci_upper"]


def test_estimate_with_config_and_intercept(tmp_path, data):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"c_theta": 1.5, "level": 0.9, "seed": 3}))
    out = tmp_path / "r.json"
    code = main(["estimate", "--data", str(data), "--config", str(cfg), "--add-intercept", "--out", str(out)])
    assert code == 0
    res = json.loads(out.read_text())
    assert res["p"] == 31 and res["level"] == 0.9 and res["config"]["c_theta"] == 1.5


def test_validation_errors_exit_1(tmp_path, data, capsys):
    assert main(["estimate", "--data", str(tmp_path / "none.csv")]) == 1
    bad = tmp_path / "bad.csv"
    bad.write_text("y,w,x1\n1,2,0\n1,0,0\n1,1,0\n1,0,0\n")
    assert main(["estimate", "--data", str(bad)]) == 1
    assert "non-binary treatment at row 1" in capsys.readouterr().err
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"c_thta": 1.0}))
    assert main(["estimate", "--data", str(data), "--config", str(cfg)]) == 1
    plan = tmp_path / "plan.json"
    plan.write_text(json.dumps({"scenarios": [{"name": "a"}], "methods": ["sdr"], "reps": 0}))
    assert main(["bench", "--plan", str(plan), "--out", str(tmp_path / "r.json")]) == 1
    assert "reps must be ≥ 1" in capsys.readouterr().err


def test_estimator_failure_exits_2(tmp_path, capsys):
    # every treated unit in one fold position pattern: a lone treated unit cannot populate both folds
    f = tmp_path / "one.csv"
    f.write_text("y,w,x1\n" + "\n".join(f"{i},{int(i == 0)},{i * 0.1}" for i in range(8)) + "\n")
    assert main(["estimate", "--data", str(f)]) == 2
    assert "estimation failed" in capsys.readouterr().err


def test_bench_end_to_end(tmp_path):
    plan = tmp_path / "plan.json"
    plan.write_text(json.dumps({
        "scenarios": [{"name": "t", "n": 60, "p": 20}, {"name": "h", "n": 60, "p": 20, "heteroskedastic": True}],
        "methods": ["sdr", "arb"],
        "reps": 5,
    }))
    out, table = tmp_path / "r.json", tmp_path / "t.md"
    assert main(["bench", "--plan", str(plan), "--out", str(out), "--table", str(table),
                 "--reps", "2", "--seed", "9"]) == 0
    d = json.loads(out.read_text())
    assert d["plan"]["reps"] == 2 and d["plan"]["master_seed"] == 9
    assert len(d["cells"]) == 4
    assert (tmp_path / "r_aggregates.csv").exists()
    text = table.read_text()
    assert "### Homoskedastic" in text and "### Heteroskedastic" in text
    csv_table = tmp_path / "t.csv"
    main(["bench", "--plan", str(plan), "--out", str(out), "--table", str(csv_table), "--reps", "1"])
    assert csv_table.read_text().startswith("method,t_mse,t_cp")
