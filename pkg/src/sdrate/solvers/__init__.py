"""Convex solvers for the nuisance fits."""

from ._prox import kkt_residual, prox_gradient, soft_threshold
from .arb import ArbWeights, arb_objective, fit_arb_weights
from .config import (
    NotConvergedWarning,
    OutcomeFit,
    PropensityFit,
    SeparationError,
    SolverConfig,
    SolverError,
    penalty_level,
)
from .losses import BalancingLoss, LogisticLoss, WeightedSquaredLoss, value_and_grad
from .outcome import fit_weighted_lasso
from .propensity import (
    balance_residual,
    dantzig_refine,
    fit_balancing_logistic,
    fit_logistic_lasso,
    fit_propensity,
)

__all__ = [
    "ArbWeights",
    "BalancingLoss",
    "LogisticLoss",
    "NotConvergedWarning",
    "OutcomeFit",
    "PropensityFit",
    "SeparationError",
    "SolverConfig",
    "SolverError",
    "WeightedSquaredLoss",
    "arb_objective",
    "balance_residual",
    "dantzig_refine",
    "fit_arb_weights",
    "fit_balancing_logistic",
    "fit_logistic_lasso",
    "fit_propensity",
    "fit_weighted_lasso",
    "kkt_residual",
    "penalty_level",
    "prox_gradient",
    "soft_threshold",
    "value_and_grad",
]
