from __future__ import annotations

import warnings

import numpy as np

from ._prox import prox_gradient
from .config import NotConvergedWarning, OutcomeFit, SolverConfig
from .losses import WeightedSquaredLoss

__all__ = ["fit_weighted_lasso"]


def fit_weighted_lasso(
    x: np.ndarray,
    y: np.ndarray,
    obs_weights: np.ndarray,
    lam_beta: float,
    cfg: SolverConfig = SolverConfig(),
) -> OutcomeFit:
    """Minimize ``(1/m) sum_i omega_i (y_i - x_i' beta)^2 + lam_beta ||beta||_1``.

    ``m`` is the number of rows of ``x``, zero-weight rows included. Rows with
    zero weight are dropped before solving.
    """
    omega = np.asarray(obs_weights, dtype=float)
    if np.any(omega < 0) or not np.all(np.isfinite(omega)):
        raise ValueError("observation weights must be finite and nonnegative")
    if not np.any(omega > 0):
        raise ValueError("at least one observation weight must be positive")
    m = x.shape[0]
    keep = omega > 0
    xs = np.ascontiguousarray(x[keep])
    loss = WeightedSquaredLoss(np.asarray(y, dtype=float)[keep], omega[keep], m=m)
    res = prox_gradient(loss, xs, lam_beta, grad_tol=cfg.grad_tol, max_iter=cfg.max_iter)
    if not res.converged:
        warnings.warn(
            f"weighted lasso stopped at max_iter with KKT residual {res.kkt:.2e}",
            NotConvergedWarning,
            stacklevel=2,
        )
    return OutcomeFit(
        beta=res.x,
        objective=res.objective,
        kkt_inf_norm=res.kkt,
        iterations=res.iterations,
        lam=lam_beta,
        converged=res.converged,
    )
