import csv
import io
import json
import math
from pathlib import Path

import numpy as np
import pytest

from sdrate.bench import (
    BenchResult,
    CellResult,
    ExperimentPlan,
    PlanError,
    aggregate,
    emit_table,
    parse_plan,
    plan_from_dict,
    run_monte_carlo,
    write_results,
)
from sdrate.simulate import ScenarioConfig

PLANS = Path(__file__).resolve().parents[1] / "plans"

TINY = {
    "scenarios": [{"name": "tiny", "n": 60, "p": 20}],
    "methods": ["sdr", "aipw", "arb"],
    "reps": 3,
    "master_seed": 5,
}


def test_minimal_plan(tmp_path):
    f = tmp_path / "p.json"
    f.write_text(json.dumps({"scenarios": [{"name": "a"}], "methods": ["sdr"], "reps": 10}))
    plan = parse_plan(f)
    assert plan.reps == 10 and plan.methods == ("sdr",)
    assert plan.scenarios[0] == ("a", ScenarioConfig())


def test_reps_must_be_positive():
    with pytest.raises(PlanError, match="reps must be ≥ 1"):
        plan_from_dict({**TINY, "reps": 0})
    with pytest.raises(PlanError, match="reps must be ≥ 1"):
        ExperimentPlan(scenarios=(("a", ScenarioConfig()),), methods=("sdr",), reps=0)


@pytest.mark.parametrize(
    "patch, pointer",
    [
        ({"repz": 3}, "/: Additional properties"),
        ({"methods": ["sdr", "ols"]}, "/methods/1"),
        ({"methods": []}, "/methods"),
        ({"scenarios": [{"name": "a", "rh0": 0.5}]}, "/scenarios/0"),
        ({"scenarios": [{"name": "a", "n": 2}]}, "/scenarios/0/n"),
        ({"solver": {"c_theta": -1}}, "/solver/c_theta"),
    ],
)
def test_schema_errors_carry_pointers(patch, pointer):
    with pytest.raises(PlanError) as info:
        plan_from_dict({**TINY, **patch})
    assert pointer in str(info.value)


def test_semantic_scenario_errors():
    with pytest.raises(PlanError, match="/scenarios/0"):
        plan_from_dict({**TINY, "scenarios": [{"name": "a", "p": 10, "s_theta": 6}]})
    with pytest.raises(PlanError, match="unique"):
        plan_from_dict({**TINY, "scenarios": [{"name": "a"}, {"name": "a"}]})


def test_parse_plan_file_errors(tmp_path):
    with pytest.raises(PlanError, match="no such plan"):
        parse_plan(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(PlanError, match="invalid JSON"):
        parse_plan(bad)


def test_shipped_table1_grid():
    plan = parse_plan(PLANS / "table1.json")
    assert len(plan.scenarios) == 8
    assert plan.methods == ("sdr", "aipw", "arb")
    cells = {(sc.s_theta, sc.s_beta, sc.heteroskedastic) for _, sc in plan.scenarios}
    assert cells == {(a, b, h) for a in (2, 30) for b in (2, 30) for h in (False, True)}
    assert all(sc.n == 500 and sc.p == 600 and sc.r_squared == 0.5 for _, sc in plan.scenarios)
    assert plan.reps == 500


def test_shipped_table2_and_smoke_parse():
    t2 = parse_plan(PLANS / "table2.json")
    assert all(sc.r_squared == 0.1 for _, sc in t2.scenarios)
    smoke = parse_plan(PLANS / "smoke.json")
    assert smoke.scenarios[0][1].n == 200


@pytest.fixture(scope="module")
def tiny_result():
    return run_monte_carlo(plan_from_dict(TINY))


def test_aggregates_recompute_from_records(tiny_result):
    for c in tiny_result.cells:
        assert len(c.rep_records) == 3
        ok = [r for r in c.rep_records if not r["failed"]]
        tau = np.array([r["tau_hat"] for r in ok])
        assert c.mse == float(np.mean(tau**2))
        assert c.cp == float(np.mean([r["covered"] for r in ok]))
        assert c.mc_se_cp == math.sqrt(c.cp * (1 - c.cp) / len(ok))
        assert c.mc_se_mse == pytest.approx((tau**2).std(ddof=1) / math.sqrt(len(ok)), rel=1e-12)
        assert 0 <= c.cp <= 1 and c.mse >= 0
        for r in ok:
            assert r["covered"] == (r["ci_lower"] <= 0.0 <= r["ci_upper"])


def test_single_rep_degenerate():
    res = run_monte_carlo(plan_from_dict({**TINY, "reps": 1, "methods": ["sdr"]}))
    c = res.cells[0]
    tau = c.rep_records[0]["tau_hat"]
    assert c.mse == tau**2
    assert c.cp in (0.0, 1.0)


def test_worker_count_does_not_change_json(tiny_result):
    plan = plan_from_dict(TINY)
    assert run_monte_carlo(plan, workers=2).to_json() == tiny_result.to_json()


def test_failures_are_counted():
    recs = [
        {"rep": 0, "failed": False, "tau_hat": 0.1, "v_hat": 1.0, "covered": True},
        {"rep": 1, "failed": True, "error": "EstimationError: no split"},
        {"rep": 2, "failed": False, "tau_hat": -0.3, "v_hat": 1.0, "covered": False},
    ]
    c = aggregate("s", "sdr", recs, n=100)
    assert c.n_ok == 2 and c.n_failed == 1
    assert c.mse == pytest.approx((0.01 + 0.09) / 2)
    assert c.cp == 0.5
    assert len(c.rep_records) == 3


def test_write_results(tmp_path, tiny_result):
    js, agg = write_results(tiny_result, tmp_path / "out.json")
    d = json.loads(js.read_text())
    assert "parallelism" not in d["plan"]
    rows = list(csv.DictReader(agg.open()))
    assert len(rows) == 3
    assert float(rows[0]["mse"]) == tiny_result.cells[0].mse


def _fake(cells_spec, methods=("sdr", "aipw", "arb")):
    scen, cells = [], []
    for name, het in cells_spec:
        scen.append((name, ScenarioConfig(heteroskedastic=het)))
        for m in methods:
            cells.append(CellResult(name, m, 0.0, 0.0415, 0.9521, 0, 0, 0, 0, 0, 1, 0, het))
    plan = ExperimentPlan(scenarios=tuple(scen), methods=tuple(methods), reps=1)
    return BenchResult(plan, cells)


def test_table_rounding_half_up():
    md = emit_table(_fake([("base", False)], methods=("sdr",)), "markdown")
    assert "| sdr | 0.042 | 0.952 |" in md


def test_csv_table_round_trip():
    res = _fake([("a", False), ("b", True)])
    rows = list(csv.reader(io.StringIO(emit_table(res, "csv"))))
    assert rows[0] == ["method", "a_mse", "a_cp", "b_mse", "b_cp"]
    assert [r[0] for r in rows[1:]] == ["sdr", "aipw", "arb"]
    assert all(float(v) == 0.042 or float(v) == 0.952 for r in rows[1:] for v in r[1:])


def test_table1_layout():
    spec = [(f"{'het' if h else 'hom'}_{a}_{b}", h) for h in (False, True) for a in (2, 30) for b in (2, 30)]
    md = emit_table(_fake(spec), "markdown")
    blocks = ["###" + b for b in md.split("###")[1:]]
    assert [b.splitlines()[0] for b in blocks] == ["### Homoskedastic", "### Heteroskedastic"]
    for b in blocks:
        lines = b.splitlines()
        body = [ln for ln in lines if ln.startswith("| ") and not ln.startswith("| method")]
        assert len(body) == 3
        assert all(ln.count("|") == 1 + 1 + 8 for ln in body)


def test_table_rejects_unknown_format():
    with pytest.raises(ValueError):
        emit_table(_fake([("a", False)]), "html")
