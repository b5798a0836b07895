"""Penalized covariate-balancing propensity fits and the logistic lasso."""

from __future__ import annotations

import warnings

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from ._prox import prox_gradient
from .config import (
    NotConvergedWarning,
    PropensityFit,
    SeparationError,
    SolverConfig,
)
from .losses import BalancingLoss, LogisticLoss

__all__ = [
    "balance_residual",
    "dantzig_refine",
    "fit_balancing_logistic",
    "fit_logistic_lasso",
    "fit_propensity",
]


def balance_residual(x: np.ndarray, w: np.ndarray, arm: int, theta: np.ndarray) -> np.ndarray:
    """``mean_i [1 - 1{W_i = arm} (1 + exp(-X_i' theta))] X_i``."""
    a = (np.asarray(w) == arm).astype(float)
    with np.errstate(over="ignore"):
        q = 1.0 + np.exp(-(x @ theta))
    return x.T @ (1.0 - a * q) / x.shape[0]


def _balance_jacobian_factors(x, w, arm, theta):
    # J = xa' diag(d) xa with the 1/m scaling folded into d; rank <= number of arm units
    a = np.asarray(w) == arm
    xa = x[a]
    d = np.exp(-(xa @ theta)) / x.shape[0]
    return xa, d


def _separation_guard(kappa: float, floor: float):
    state = {"obj": np.inf}

    def guard(theta, obj):
        if obj < state["obj"] and obj < floor and np.abs(theta).sum() > 10.0 * kappa:
            raise SeparationError(
                "balancing loss decreasing without bound "
                f"(objective {obj:.3g}, ||theta||_1 = {np.abs(theta).sum():.3g}); "
                "the treated and control covariates appear to be separated"
            )
        state["obj"] = obj

    return guard


def fit_balancing_logistic(
    x: np.ndarray,
    w: np.ndarray,
    arm: int,
    lam_theta: float,
    cfg: SolverConfig = SolverConfig(),
    x0: np.ndarray | None = None,
) -> PropensityFit:
    """Minimize the l1-penalized covariate-balancing loss for one arm.

    The returned fit satisfies ``||balance_residual||_inf <= lam_theta + grad_tol``
    when ``converged`` is true.

    Raises
    ------
    SeparationError
        If the objective keeps falling while ``||theta||_1`` exceeds ``10 kappa``.
    """
    w = np.asarray(w)
    if not (np.any(w == arm) and np.any(w != arm)):
        raise ValueError("both arms must be present in the fitting sample")
    loss = BalancingLoss(w, arm)
    f0 = loss.value(np.zeros(x.shape[0]))
    guard = _separation_guard(cfg.kappa, floor=-10.0 * (1.0 + abs(f0)))
    res = prox_gradient(
        loss, x, lam_theta, x0, grad_tol=cfg.grad_tol, max_iter=cfg.max_iter, guard=guard
    )
    if not res.converged:
        warnings.warn(
            f"balancing fit stopped at max_iter with KKT residual {res.kkt:.2e}",
            NotConvergedWarning,
            stacklevel=2,
        )
    return PropensityFit(
        theta=res.x,
        objective=res.objective,
        balance_inf_norm=float(np.max(np.abs(res.grad))),
        refined=False,
        iterations=res.iterations,
        arm=arm,
        lam=lam_theta,
        converged=res.converged,
        kkt=res.kkt,
    )


def _linearized_l1_min(g0, xa, d, theta0, lam):
    """min ||theta||_1 s.t. |g0 + J (theta - theta0)|_inf <= lam, J = xa' diag(d) xa.

    Written with theta = u - v and s = xa theta so the constraint matrix keeps the
    low-rank structure of J; solved by HiGHS.
    """
    na, p = xa.shape
    if na == 0:
        return None
    m = xa.T * d  # p x na
    c0 = g0 - m @ (xa @ theta0)
    # variables: u (p), v (p), s (na)
    cost = np.concatenate([np.ones(2 * p), np.zeros(na)])
    zeros = sparse.csr_matrix((p, 2 * p))
    a_ub = sparse.vstack([
        sparse.hstack([zeros, sparse.csr_matrix(m)]),
        sparse.hstack([zeros, sparse.csr_matrix(-m)]),
    ]).tocsc()
    b_ub = np.concatenate([lam - c0, lam + c0])
    a_eq = sparse.hstack([sparse.csr_matrix(xa), sparse.csr_matrix(-xa), -sparse.identity(na)]).tocsc()
    bounds = [(0, None)] * (2 * p) + [(None, None)] * na
    sol = linprog(
        cost,
        A_ub=a_ub,
        b_ub=b_ub,
        A_eq=a_eq,
        b_eq=np.zeros(na),
        bounds=bounds,
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if sol.status != 0:
        return None
    return sol.x[:p] - sol.x[p:2 * p]


def dantzig_refine(
    x: np.ndarray,
    w: np.ndarray,
    arm: int,
    theta_check: PropensityFit | np.ndarray,
    lam_theta: float,
    kappa: float | None = None,
    cfg: SolverConfig = SolverConfig(),
) -> PropensityFit:
    """l1-minimal point of the balance constraint set, used when the
    penalized fit is too large.

    If ``||theta_check||_1 <= kappa`` the input is returned unchanged. Otherwise
    ``min ||theta||_1`` subject to ``||balance_residual(theta)||_inf <= lam_theta``
    is solved by sequential linearization of the balance map around the current
    iterate; each linearized program is an LP aimed slightly inside the
    constraint, with an adaptive margin. Every accepted step is checked
    against the exact nonlinear constraint (within ``grad_tol``), with step
    halving toward the current feasible iterate, so the l1 norm never
    increases along the way.
    """
    kappa = cfg.kappa if kappa is None else kappa
    if isinstance(theta_check, PropensityFit):
        start = theta_check
    else:
        th = np.asarray(theta_check, dtype=float)
        g = balance_residual(x, w, arm, th)
        start = PropensityFit(
            theta=th,
            objective=float("nan"),
            balance_inf_norm=float(np.max(np.abs(g))),
            refined=False,
            iterations=0,
            arm=arm,
            lam=lam_theta,
        )
    theta = np.array(start.theta, dtype=float)
    l1 = float(np.abs(theta).sum())
    if l1 <= kappa:
        return start

    bound = lam_theta + cfg.grad_tol
    g = balance_residual(x, w, arm, theta)
    if np.max(np.abs(g)) > bound:
        warnings.warn("starting point violates the balance constraint; refinement skipped", stacklevel=2)
        return _unrefined(start, "infeasible start")

    # Each LP targets lam - margin: the exact balance map curves away from its
    # linearization, so a boundary-hugging LP solution is infeasible at any
    # sizeable step. The margin grows after truncated steps and shrinks after
    # full ones, ending close to the true constraint.
    margin = 0.1 * lam_theta
    floor = 1e-3 * cfg.grad_tol
    improved = False
    steps = 0
    for steps in range(1, 101):
        xa, d = _balance_jacobian_factors(x, w, arm, theta)
        cand = _linearized_l1_min(g, xa, d, theta, lam_theta - margin)
        if cand is None:
            margin *= 0.25
            if margin < floor:
                break
            continue
        direction = cand - theta
        accepted = None
        step = 1.0
        while step >= 2.0**-30:
            trial = theta + step * direction
            gt = balance_residual(x, w, arm, trial)
            if np.max(np.abs(gt)) <= bound:
                accepted = (trial, gt)
                break
            step *= 0.5
        if accepted is None:
            if margin >= 0.5 * lam_theta:
                break
            margin = min(2.0 * margin, 0.5 * lam_theta)
            continue
        trial, gt = accepted
        new_l1 = float(np.abs(trial).sum())
        decrease = l1 - new_l1
        if decrease <= 0:
            # the tightened target costs more l1 than it saves: relax it
            margin *= 0.25
            if margin < floor:
                break
            continue
        theta, g, l1 = trial, gt, new_l1
        improved = True
        if decrease < cfg.dantzig_tol:
            break
        if step == 1.0:
            margin *= 0.25
        else:
            margin = min(2.0 * margin, 0.5 * lam_theta)

    if not improved:
        warnings.warn("Dantzig refinement found no feasible point with smaller l1 norm", stacklevel=2)
        return _unrefined(start, "no l1 decrease")
    loss = BalancingLoss(w, arm)
    return PropensityFit(
        theta=theta,
        objective=loss.value(x @ theta) + lam_theta * l1,
        balance_inf_norm=float(np.max(np.abs(g))),
        refined=True,
        iterations=start.iterations + steps,
        arm=arm,
        lam=lam_theta,
        converged=True,
        kkt=float("nan"),
    )


def _unrefined(fit: PropensityFit, why: str) -> PropensityFit:
    return PropensityFit(
        theta=fit.theta,
        objective=fit.objective,
        balance_inf_norm=fit.balance_inf_norm,
        refined=False,
        iterations=fit.iterations,
        arm=fit.arm,
        lam=fit.lam,
        converged=fit.converged,
        kkt=fit.kkt,
        fold=fit.fold,
        message=f"refinement skipped: {why}",
    )


def fit_propensity(
    x: np.ndarray, w: np.ndarray, arm: int, lam_theta: float, cfg: SolverConfig = SolverConfig()
) -> PropensityFit:
    """Penalized balancing fit followed by the l1 refinement when it exceeds ``kappa``."""
    check = fit_balancing_logistic(x, w, arm, lam_theta, cfg)
    if np.abs(check.theta).sum() <= cfg.kappa:
        return check
    return dantzig_refine(x, w, arm, check, lam_theta, cfg.kappa, cfg)


def fit_logistic_lasso(
    x: np.ndarray, w: np.ndarray, lam: float, cfg: SolverConfig = SolverConfig()
) -> PropensityFit:
    """l1-penalized logistic regression of ``w`` on ``x`` (no intercept)."""
    w = np.asarray(w)
    if not (np.any(w == 1) and np.any(w == 0)):
        raise ValueError("both classes must be present")
    loss = LogisticLoss(w)
    res = prox_gradient(loss, x, lam, grad_tol=cfg.grad_tol, max_iter=cfg.max_iter)
    if not res.converged:
        warnings.warn(
            f"logistic lasso stopped at max_iter with KKT residual {res.kkt:.2e}",
            NotConvergedWarning,
            stacklevel=2,
        )
    return PropensityFit(
        theta=res.x,
        objective=res.objective,
        balance_inf_norm=float("nan"),
        refined=False,
        iterations=res.iterations,
        arm=1,
        lam=lam,
        converged=res.converged,
        kkt=res.kkt,
    )
