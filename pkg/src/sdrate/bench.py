"""Monte Carlo benchmark: experiment plans, replication runner, tables.

A plan lists scenarios and methods. Replication ``r`` of scenario ``s`` draws
its data from the stream ``(master_seed, key(s), r)``, so results do not
depend on how replications are distributed over worker processes.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

import jsonschema
import numpy as np
from threadpoolctl import threadpool_limits

from ._rng import DATA, SPLIT, SPLIT_AIPW, name_key, stream
from .baselines import estimate_ate_aipw, estimate_ate_arb
from .data import DataError
from .estimator import EstimationError, estimate_ate_sdr
from .simulate import ScenarioConfig, simulate
from .solvers import SolverConfig, SolverError

__all__ = [
    "METHODS",
    "PLAN_SCHEMA",
    "BenchResult",
    "CellResult",
    "ExperimentPlan",
    "PlanError",
    "aggregate",
    "emit_table",
    "parse_plan",
    "run_monte_carlo",
    "run_replication",
    "write_results",
]

METHODS = ("sdr", "aipw", "arb")

_SCENARIO_SCHEMA = {
    "type": "object",
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "n": {"type": "integer", "minimum": 4},
        "p": {"type": "integer", "minimum": 1},
        "rho": {"type": "number", "exclusiveMinimum": -1, "exclusiveMaximum": 1},
        "s_theta": {"type": "integer", "minimum": 1},
        "s_beta": {"type": "integer", "minimum": 1},
        "r_squared": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "heteroskedastic": {"type": "boolean"},
    },
    "required": ["name"],
    "additionalProperties": False,
}

_SOLVER_SCHEMA = {
    "type": "object",
    "properties": {
        k: {"type": "integer" if k == "max_iter" else "number", "exclusiveMinimum": 0}
        for k in SolverConfig().to_dict()
    },
    "additionalProperties": False,
}

PLAN_SCHEMA = {
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "scenarios": {"type": "array", "items": _SCENARIO_SCHEMA, "minItems": 1},
        "methods": {
            "type": "array",
            "items": {"enum": list(METHODS)},
            "minItems": 1,
            "uniqueItems": True,
        },
        "reps": {"type": "integer", "minimum": 1},
        "level": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "master_seed": {"type": "integer", "minimum": 0},
        "parallelism": {"type": "integer", "minimum": 1},
        "solver": _SOLVER_SCHEMA,
    },
    "required": ["scenarios", "methods"],
    "additionalProperties": False,
}


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentPlan:
    scenarios: tuple[tuple[str, ScenarioConfig], ...]
    methods: tuple[str, ...]
    reps: int = 500
    level: float = 0.95
    master_seed: int = 0
    parallelism: int = 1
    solver: SolverConfig = SolverConfig()
    name: str = ""

    def __post_init__(self):
        if self.reps < 1:
            raise PlanError("reps must be ≥ 1")
        if not self.methods:
            raise PlanError("methods must be non-empty")
        names = [s for s, _ in self.scenarios]
        if len(set(names)) != len(names):
            raise PlanError(f"scenario names must be unique, got {names}")

    def replace(self, **kw) -> "ExperimentPlan":
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update(kw)
        return ExperimentPlan(**d)

    def to_dict(self) -> dict:
        """Plan content that affects results (the worker hint is left out)."""
        scen = []
        for name, sc in self.scenarios:
            d = asdict(sc)
            d.pop("seed")
            scen.append({"name": name, **d})
        return {
            "name": self.name,
            "scenarios": scen,
            "methods": list(self.methods),
            "reps": self.reps,
            "level": self.level,
            "master_seed": self.master_seed,
            "solver": self.solver.to_dict(),
        }


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path)


def _schema_message(err: jsonschema.ValidationError) -> str:
    where = _pointer(err.absolute_path)
    if list(err.absolute_path) == ["reps"] and err.validator == "minimum":
        return f"{where}: reps must be ≥ 1"
    return f"{where}: {err.message}"


def plan_from_dict(d: dict) -> ExperimentPlan:
    """Validate a decoded plan and build it; errors carry JSON-pointer paths."""
    validator = jsonschema.Draft202012Validator(PLAN_SCHEMA)
    errors = sorted(validator.iter_errors(d), key=lambda e: list(e.absolute_path))
    if errors:
        raise PlanError("; ".join(_schema_message(e) for e in errors))
    scenarios = []
    for i, s in enumerate(d["scenarios"]):
        s = dict(s)
        name = s.pop("name")
        try:
            scenarios.append((name, ScenarioConfig.from_dict(s)))
        except ValueError as exc:
            raise PlanError(f"/scenarios/{i}: {exc}") from None
    kw = {k: d[k] for k in ("reps", "level", "master_seed", "parallelism", "name") if k in d}
    try:
        solver = SolverConfig.from_dict(d.get("solver", {}))
    except ValueError as exc:
        raise PlanError(f"/solver: {exc}") from None
    return ExperimentPlan(scenarios=tuple(scenarios), methods=tuple(d["methods"]), solver=solver, **kw)


def parse_plan(path) -> ExperimentPlan:
    path = Path(path)
    try:
        d = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise PlanError(f"no such plan file: {path}") from None
    except json.JSONDecodeError as exc:
        raise PlanError(f"{path}: invalid JSON ({exc})") from None
    return plan_from_dict(d)


def _summarize(method: str, d: dict) -> dict:
    # one-line health summary per replication; full diagnostics stay with single estimates
    if method == "sdr":
        bal = [v for arm in d["balance_inf_norm"].values() for v in arm.values()]
        kkt = [v for arm in d["lasso_kkt"].values() for v in arm.values()]
        conv = all(v for arm in d["converged"].values() for v in arm.values())
        refined = sum(v for arm in d["refined"].values() for v in arm.values())
        return {
            "converged": conv,
            "max_balance_inf_norm": max(bal),
            "max_lasso_kkt": max(kkt),
            "refined_fits": int(refined),
            "clamp_count": d["clamp_count"],
        }
    if method == "aipw":
        return {"converged": all(d["converged"].values()), "propensity_clamped": d["propensity_clamped"]}
    return {"converged": all(d["converged"].values()), "max_duality_gap": max(d["duality_gap"].values())}


def run_replication(plan: ExperimentPlan, scenario_index: int, r: int) -> list[dict]:
    """All methods of the plan on replication ``r`` of one scenario."""
    name, sc = plan.scenarios[scenario_index]
    key = name_key(name)
    ds, truth = simulate(sc, rng=stream(plan.master_seed, key, r, DATA))
    out = []
    for method in plan.methods:
        rec = {"rep": r}
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                if method == "sdr":
                    est, _ = estimate_ate_sdr(
                        ds, plan.solver, rng=stream(plan.master_seed, key, r, SPLIT), level=plan.level
                    )
                    res = est.to_dict()
                elif method == "aipw":
                    est = estimate_ate_aipw(
                        ds, plan.solver, rng=stream(plan.master_seed, key, r, SPLIT_AIPW), level=plan.level
                    )
                    res = est.to_dict()
                else:
                    res = estimate_ate_arb(ds, plan.solver, level=plan.level).to_dict()
            except (EstimationError, SolverError, DataError, FloatingPointError) as exc:
                rec.update(failed=True, error=f"{type(exc).__name__}: {exc}")
                out.append(rec)
                continue
        lo, hi = res["ci_lower"], res["ci_upper"]
        rec.update(
            failed=False,
            tau_hat=res["tau_hat"],
            v_hat=res["v_hat"],
            ci_lower=lo,
            ci_upper=hi,
            covered=bool(lo <= truth.tau_true <= hi),
            warnings=len(caught),
            diagnostics=_summarize(method, res["diagnostics"]),
        )
        out.append(rec)
    return out


def _run_task(args):
    plan, i, r = args
    with threadpool_limits(limits=1):
        return run_replication(plan, i, r)


@dataclass
class CellResult:
    scenario: str
    method: str
    tau_true: float
    mse: float
    cp: float
    mc_se_mse: float
    mc_se_cp: float
    bias: float
    var_tau: float
    mean_v_over_n: float
    n_ok: int
    n_failed: int
    heteroskedastic: bool
    rep_records: list = field(default_factory=list)


def aggregate(scenario: str, method: str, records: list[dict], n: int, tau_true: float = 0.0,
              heteroskedastic: bool = False) -> CellResult:
    """MSE, coverage and their Monte Carlo errors over the successful replications."""
    ok = [rec for rec in records if not rec["failed"]]
    k = len(ok)
    nan = float("nan")
    if k == 0:
        return CellResult(scenario, method, tau_true, nan, nan, nan, nan, nan, nan, nan, 0, len(records),
                          heteroskedastic, records)
    tau = np.array([rec["tau_hat"] for rec in ok])
    sq = (tau - tau_true) ** 2
    cp = float(np.mean([rec["covered"] for rec in ok]))
    return CellResult(
        scenario=scenario,
        method=method,
        tau_true=tau_true,
        mse=float(sq.mean()),
        cp=cp,
        mc_se_mse=float(sq.std(ddof=1) / math.sqrt(k)) if k > 1 else 0.0,
        mc_se_cp=math.sqrt(cp * (1 - cp) / k),
        bias=float(tau.mean() - tau_true),
        var_tau=float(tau.var(ddof=1)) if k > 1 else 0.0,
        mean_v_over_n=float(np.mean([rec["v_hat"] for rec in ok])) / n,
        n_ok=k,
        n_failed=len(records) - k,
        heteroskedastic=heteroskedastic,
        rep_records=records,
    )


@dataclass
class BenchResult:
    plan: ExperimentPlan
    cells: list[CellResult]

    def cell(self, scenario: str, method: str) -> CellResult:
        for c in self.cells:
            if c.scenario == scenario and c.method == method:
                return c
        raise KeyError((scenario, method))

    def to_json(self) -> str:
        d = {"plan": self.plan.to_dict(), "cells": [asdict(c) for c in self.cells]}
        return json.dumps(d, sort_keys=True, indent=1, allow_nan=True) + "\n"

    def aggregates_csv(self) -> str:
        buf = io.StringIO()
        cols = ["scenario", "method", "mse", "cp", "mc_se_mse", "mc_se_cp", "bias", "var_tau",
                "mean_v_over_n", "n_ok", "n_failed"]
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(cols)
        for c in self.cells:
            wr.writerow([repr(v) if isinstance(v, float) else v for v in (getattr(c, k) for k in cols)])
        return buf.getvalue()


def run_monte_carlo(plan: ExperimentPlan, workers: int | None = None) -> BenchResult:
    """Run every replication of every scenario; aggregate in replication order.

    ``workers`` overrides the plan's parallelism hint. Output does not depend on it.
    """
    workers = plan.parallelism if workers is None else workers
    tasks = [(plan, i, r) for i in range(len(plan.scenarios)) for r in range(plan.reps)]
    if workers <= 1:
        outputs = [_run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    cells = []
    for i, (name, sc) in enumerate(plan.scenarios):
        rows = outputs[i * plan.reps:(i + 1) * plan.reps]
        for j, method in enumerate(plan.methods):
            cells.append(aggregate(name, method, [row[j] for row in rows], sc.n,
                                   heteroskedastic=sc.heteroskedastic))
    return BenchResult(plan, cells)


def write_results(result: BenchResult, path) -> tuple[Path, Path]:
    """Full records as JSON plus an aggregates CSV beside it."""
    path = Path(path)
    path.write_text(result.to_json(), encoding="utf-8")
    agg = path.with_name(path.stem + "_aggregates.csv")
    agg.write_text(result.aggregates_csv(), encoding="utf-8")
    return path, agg


def _fmt(x: float) -> str:
    if not math.isfinite(x):
        return "nan"
    return str(Decimal(repr(x)).quantize(Decimal("0.001"), rounding=ROUND_HALF_UP))


def emit_table(result: BenchResult, format: str = "markdown") -> str:
    """Methods as rows, scenario MSE/CP as columns, three decimals.

    Markdown output has one table per error regime; CSV output is a single wide
    table in scenario order.
    """
    if not result.cells:
        raise ValueError("empty result")
    scen = [name for name, _ in result.plan.scenarios]
    methods = list(result.plan.methods)
    if format == "csv":
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["method"] + [f"{s}_{k}" for s in scen for k in ("mse", "cp")])
        for m in methods:
            row = [m]
            for s in scen:
                c = result.cell(s, m)
                row += [_fmt(c.mse), _fmt(c.cp)]
            wr.writerow(row)
        return buf.getvalue()
    if format != "markdown":
        raise ValueError(f"unknown table format {format!r}")
    hetero = {name: sc.heteroskedastic for name, sc in result.plan.scenarios}
    blocks = []
    for label, flag in (("Homoskedastic", False), ("Heteroskedastic", True)):
        group = [s for s in scen if hetero[s] == flag]
        if not group:
            continue
        lines = [f"### {label}", ""]
        lines.append("| method | " + " | ".join(f"{s} MSE | {s} CP" for s in group) + " |")
        lines.append("|---" * (1 + 2 * len(group)) + "|")
        for m in methods:
            vals = []
            for s in group:
                c = result.cell(s, m)
                vals += [_fmt(c.mse), _fmt(c.cp)]
            lines.append(f"| {m} | " + " | ".join(vals) + " |")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"
