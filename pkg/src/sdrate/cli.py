"""Command-line front end: ``simulate``, ``estimate`` and ``bench``.

Exit status is 0 on success, 1 when an input fails validation and 2 when an
estimator fails on valid input.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ._rng import SPLIT, SPLIT_AIPW, stream
from .baselines import estimate_ate_aipw, estimate_ate_arb
from .bench import PlanError, emit_table, parse_plan, run_monte_carlo, write_results
from .data import DataError, load_dataset, save_dataset
from .estimator import EstimationError, estimate_ate_sdr
from .simulate import ScenarioConfig, simulate
from .solvers import SolverConfig, SolverError

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2


class InputError(ValueError):
    pass


def _read_json(path) -> dict:
    path = Path(path)
    try:
        d = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InputError(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(d, dict):
        raise InputError(f"{path}: expected a JSON object")
    return d


def cmd_simulate(args) -> int:
    d = _read_json(args.scenario)
    d.pop("name", None)
    if args.seed is not None:
        d["seed"] = args.seed
    try:
        sc = ScenarioConfig.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{args.scenario}: {exc}") from None
    ds, truth = simulate(sc)
    out = Path(args.out)
    save_dataset(ds, out)
    out.with_name(out.stem + "_truth.json").write_text(truth.to_json() + "\n", encoding="utf-8")
    return EXIT_OK


# settings an estimate config may carry besides the solver ones
_RUN_KEYS = ("level", "seed", "eta", "zeta")


def cmd_estimate(args) -> int:
    raw = _read_json(args.config) if args.config else {}
    run = {k: raw.pop(k) for k in _RUN_KEYS if k in raw}
    try:
        cfg = SolverConfig.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise InputError(f"config: {exc}") from None
    level = run.get("level", 0.95)
    if not 0 < level < 1:
        raise InputError(f"config: level must lie in (0, 1), got {level}")
    seed = int(run.get("seed", 0))
    ds = load_dataset(args.data)
    if args.add_intercept:
        ds = ds.with_intercept()
    if args.method == "sdr":
        est, _ = estimate_ate_sdr(ds, cfg, rng=stream(seed, SPLIT), level=level)
    elif args.method == "aipw":
        est = estimate_ate_aipw(ds, cfg, rng=stream(seed, SPLIT_AIPW), level=level, eta=run.get("eta", 0.01))
    else:
        est = estimate_ate_arb(ds, cfg, level=level, zeta=run.get("zeta", 1.0))
    res = est.to_dict()
    res["n"], res["p"] = ds.n, ds.p
    res["config"] = cfg.to_dict()
    text = json.dumps(res, indent=1, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_bench(args) -> int:
    plan = parse_plan(args.plan)
    kw = {}
    if args.reps is not None:
        kw["reps"] = args.reps
    if args.seed is not None:
        kw["master_seed"] = args.seed
    if kw:
        plan = plan.replace(**kw)
    result = run_monte_carlo(plan, workers=args.workers)
    write_results(result, args.out)
    if args.table:
        fmt = "csv" if str(args.table).endswith(".csv") else "markdown"
        Path(args.table).write_text(emit_table(result, fmt), encoding="utf-8")
    failed = sum(c.n_failed for c in result.cells)
    if failed:
        print(f"warning: {failed} replication(s) failed; see the results file", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sdrate", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="draw one dataset from a scenario")
    s.add_argument("--scenario", required=True, help="scenario JSON")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True, help="CSV path; true parameters go to <stem>_truth.json")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", help="estimate the ATE on a CSV dataset")
    e.add_argument("--data", required=True)
    e.add_argument("--method", choices=("sdr", "aipw", "arb"), default="sdr")
    e.add_argument("--config", help="JSON with solver settings and optional level/seed/eta/zeta")
    e.add_argument("--out", help="result JSON (stdout if omitted)")
    e.add_argument("--add-intercept", action="store_true", help="prepend a column of ones")
    e.set_defaults(func=cmd_estimate)

    b = sub.add_parser("bench", help="run a Monte Carlo plan")
    b.add_argument("--plan", required=True)
    b.add_argument("--out", required=True, help="results JSON; aggregates CSV is written beside it")
    b.add_argument("--table", help="table path (.csv for CSV, markdown otherwise)")
    b.add_argument("--reps", type=int)
    b.add_argument("--seed", type=int)
    b.add_argument("--workers", type=int)
    b.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, DataError, PlanError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (EstimationError, SolverError) as exc:
        print(f"estimation failed: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
