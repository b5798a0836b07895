"""Sparsity double robust estimation of average treatment effects."""

from .baselines import BaselineEstimate, estimate_ate_aipw, estimate_ate_arb
from .bench import ExperimentPlan, emit_table, parse_plan, run_monte_carlo
from .data import DataError, Dataset, FoldSplit, load_dataset, save_dataset, split_halves
from .estimator import (
    CrossFitError,
    EstimationError,
    SdrEstimate,
    confidence_interval,
    estimate_ate_sdr,
    estimate_variance,
    influence_values,
)
from .simulate import ScenarioConfig, TrueParams, simulate
from .solvers import SolverConfig

__all__ = [
    "BaselineEstimate",
    "CrossFitError",
    "DataError",
    "Dataset",
    "EstimationError",
    "ExperimentPlan",
    "FoldSplit",
    "ScenarioConfig",
    "SdrEstimate",
    "SolverConfig",
    "TrueParams",
    "confidence_interval",
    "emit_table",
    "estimate_ate_aipw",
    "estimate_ate_arb",
    "estimate_ate_sdr",
    "estimate_variance",
    "influence_values",
    "load_dataset",
    "parse_plan",
    "run_monte_carlo",
    "save_dataset",
    "simulate",
    "split_halves",
]
