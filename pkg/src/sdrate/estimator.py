"""Cross-fitted sparsity double robust ATE estimator.

For each fold ``F`` and arm ``w`` the propensity coefficients are fitted on
``F`` by the balancing program and the outcome coefficients on ``F`` by a lasso
weighted with ``exp(-X' theta)``. The arm mean on ``F`` combines the outcome
fit from the *other* fold with in-fold balancing weights
``1 + exp(-X' theta)``; the ATE averages the two fold means per arm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from ._rng import SPLIT, as_generator, stream
from .data import Dataset, DataError, FoldSplit, split_halves
from .solvers import (
    OutcomeFit,
    PropensityFit,
    SolverConfig,
    balance_residual,
    fit_propensity,
    fit_weighted_lasso,
    penalty_level,
)

__all__ = [
    "ARMS",
    "CLAMP",
    "CrossFitError",
    "EstimationError",
    "FOLDS",
    "InfluenceDiagnostics",
    "NuisanceFit",
    "SdrEstimate",
    "confidence_interval",
    "count_clamped",
    "draw_split",
    "estimate_ate_sdr",
    "estimate_variance",
    "gamma_weights",
    "influence_values",
    "mu_hat_fold",
]

ARMS = (0, 1)
FOLDS = ("A", "B")
CLAMP = 50.0
MAX_RESPLITS = 10


class EstimationError(RuntimeError):
    pass


class CrossFitError(ValueError):
    """A fold mean was asked to use nuisances with the wrong fold orientation."""


def count_clamped(z: np.ndarray) -> int:
    return int(np.count_nonzero(np.abs(z) > CLAMP))


def gamma_weights(x: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """``1 + exp(-X' theta)`` with the exponent clamped to ``[-50, 50]``."""
    z = np.clip(x @ theta, -CLAMP, CLAMP)
    return 1.0 + np.exp(-z)


def mu_hat_fold(
    dataset: Dataset,
    fold: np.ndarray,
    arm: int,
    theta_in_fold: PropensityFit,
    beta_cross_fold: OutcomeFit,
    fold_label: str | None = None,
) -> float:
    """Augmented arm mean on one fold.

    ``(1/|F|) sum_{i in F} [X_i' beta + gamma_i 1{W_i = arm} (Y_i - X_i' beta)]``
    with ``gamma_i = 1 + exp(-X_i' theta)``.

    The propensity fit must come from this fold and the outcome fit from the
    other one; fits carrying fold labels are checked against ``fold_label``.
    """
    fold = np.asarray(fold)
    if fold.size == 0:
        raise DataError("empty fold")
    if not isinstance(theta_in_fold, PropensityFit) or not isinstance(beta_cross_fold, OutcomeFit):
        raise CrossFitError("expected a PropensityFit and an OutcomeFit")
    if theta_in_fold.arm != arm or (beta_cross_fold.arm is not None and beta_cross_fold.arm != arm):
        raise CrossFitError("nuisance fits belong to a different arm")
    if fold_label is not None:
        if theta_in_fold.fold is not None and theta_in_fold.fold != fold_label:
            raise CrossFitError(f"propensity fit from fold {theta_in_fold.fold} used on fold {fold_label}")
        if beta_cross_fold.fold is not None and beta_cross_fold.fold == fold_label:
            raise CrossFitError(f"outcome fit from fold {fold_label} evaluated on its own training fold")
    x = dataset.x[fold]
    y = dataset.y[fold]
    a = dataset.w[fold] == arm
    pred = x @ beta_cross_fold.beta
    g = gamma_weights(x, theta_in_fold.theta)
    return float(np.mean(pred + g * a * (y - pred)))


@dataclass
class NuisanceFit:
    """Propensity and outcome fits keyed by ``(arm, fold)``."""

    split: FoldSplit
    propensity: dict = field(default_factory=dict)
    outcome: dict = field(default_factory=dict)

    def theta_avg(self, arm: int) -> np.ndarray:
        return 0.5 * (self.propensity[arm, "A"].theta + self.propensity[arm, "B"].theta)

    def beta_avg(self, arm: int) -> np.ndarray:
        return 0.5 * (self.outcome[arm, "A"].beta + self.outcome[arm, "B"].beta)


@dataclass
class SdrEstimate:
    tau_hat: float
    mu_hat: dict
    omega_hat: float
    v0_hat: float
    v1_hat: float
    v_hat: float
    n: int
    ci: tuple[float, float]
    level: float
    diagnostics: dict

    @property
    def se(self) -> float:
        return float(np.sqrt(self.v_hat / self.n))

    def to_dict(self) -> dict:
        return {
            "method": "sdr",
            "tau_hat": self.tau_hat,
            "se": self.se,
            "ci_lower": self.ci[0],
            "ci_upper": self.ci[1],
            "level": self.level,
            "v_hat": self.v_hat,
            "omega_hat": self.omega_hat,
            "v0_hat": self.v0_hat,
            "v1_hat": self.v1_hat,
            "mu_hat": {f"{w}{f}": v for (w, f), v in sorted(self.mu_hat.items())},
            "diagnostics": self.diagnostics,
        }


def confidence_interval(tau_hat: float, v_hat: float, n: int, level: float = 0.95) -> tuple[float, float]:
    """Normal interval ``tau_hat +/- z * sqrt(v_hat / n)``."""
    if v_hat < 0:
        raise ValueError(f"negative variance estimate {v_hat}")
    if not 0 < level < 1:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    half = norm.ppf(0.5 + level / 2.0) * np.sqrt(v_hat / n)
    return float(tau_hat - half), float(tau_hat + half)


def estimate_variance(
    dataset: Dataset,
    beta: dict,
    theta: dict,
    tau_hat: float,
) -> tuple[float, float, float, float]:
    """Plug-in variance pieces ``(omega, v0, v1, v)``.

    ``beta`` and ``theta`` map arm to coefficient vector. The arm-``w`` term
    uses residuals ``Y - X' beta_w`` weighted by ``1 + exp(-X' theta_w)`` on the
    units with ``W = w``, where ``theta_w`` parametrizes ``P(W = w | X)``.
    """
    x, y, w = dataset.x, dataset.y, dataset.w
    contrast = x @ (beta[1] - beta[0])
    omega = float(np.mean((contrast - tau_hat) ** 2))
    v = {}
    for arm in ARMS:
        a = w == arm
        resid = y - x @ beta[arm]
        g = gamma_weights(x, theta[arm])
        v[arm] = float(np.mean(a * resid**2 * g**2))
    return omega, v[0], v[1], omega + v[0] + v[1]


def draw_split(dataset: Dataset, rng) -> FoldSplit:
    """Random halves with both arms present in each fold (bounded retries)."""
    rng = as_generator(rng)
    for _ in range(MAX_RESPLITS):
        split = split_halves(dataset.n, rng)
        ok = all(
            0 < int(dataset.w[split[f]].sum()) < split[f].size
            for f in FOLDS
        )
        if ok:
            return split
    raise EstimationError(f"could not find a split with both arms in each fold after {MAX_RESPLITS} tries")


def fit_nuisances(dataset: Dataset, split: FoldSplit, cfg: SolverConfig) -> NuisanceFit:
    nf = NuisanceFit(split)
    p = dataset.p
    for f in FOLDS:
        idx = split[f]
        x, y, w = dataset.x[idx], dataset.y[idx], dataset.w[idx]
        b = idx.size
        lam_theta = penalty_level(cfg.c_theta, p, b)
        lam_beta = penalty_level(cfg.c_beta, p, b)
        for arm in ARMS:
            pf = fit_propensity(x, w, arm, lam_theta, cfg)
            pf.fold = f
            omega = (w == arm) * np.exp(-np.clip(x @ pf.theta, -CLAMP, CLAMP))
            of = fit_weighted_lasso(x, y, omega, lam_beta, cfg)
            of.arm, of.fold = arm, f
            nf.propensity[arm, f] = pf
            nf.outcome[arm, f] = of
    return nf


def _diagnostics(dataset: Dataset, nf: NuisanceFit, cfg: SolverConfig) -> dict:
    # nested as table[arm][fold]
    names = ("balance_inf_norm", "lasso_kkt", "converged", "refined", "lam_theta", "lam_beta")
    tables = {k: {str(arm): {} for arm in ARMS} for k in names}
    clamps = 0
    for arm in ARMS:
        for f in FOLDS:
            idx = nf.split[f]
            pf, of = nf.propensity[arm, f], nf.outcome[arm, f]
            # recomputed from scratch, not taken from the solver
            g = balance_residual(dataset.x[idx], dataset.w[idx], arm, pf.theta)
            a = str(arm)
            tables["balance_inf_norm"][a][f] = float(np.max(np.abs(g)))
            tables["lasso_kkt"][a][f] = of.kkt_inf_norm
            tables["converged"][a][f] = bool(pf.converged and of.converged)
            tables["refined"][a][f] = bool(pf.refined)
            tables["lam_theta"][a][f] = pf.lam
            tables["lam_beta"][a][f] = of.lam
            clamps += count_clamped(dataset.x[idx] @ pf.theta)
    return {**tables, "clamp_count": clamps}


def estimate_ate_sdr(
    dataset: Dataset,
    cfg: SolverConfig = SolverConfig(),
    rng=None,
    level: float = 0.95,
    variance: str = "averaged",
    split: FoldSplit | None = None,
) -> tuple[SdrEstimate, NuisanceFit]:
    """Sparsity double robust ATE with two-fold cross-fitting.

    Parameters
    ----------
    dataset : Dataset
    cfg : SolverConfig
    rng : Generator or seed, optional
        Drives the fold split.
    level : float
        Confidence level of the returned interval.
    variance : {"averaged", "per_fold"}
        ``"averaged"`` plugs fold-averaged coefficients into the variance
        formula; ``"per_fold"`` averages the two single-fold variance estimates.
    split : FoldSplit, optional
        Use a fixed split instead of drawing one.
    """
    if variance not in ("averaged", "per_fold"):
        raise ValueError(f"unknown variance mode {variance!r}")
    if split is None:
        split = draw_split(dataset, stream(0, SPLIT) if rng is None else rng)
    nf = fit_nuisances(dataset, split, cfg)

    mu = {}
    for arm in ARMS:
        for f in FOLDS:
            other = split.other(f)
            mu[arm, f] = mu_hat_fold(
                dataset, split[f], arm, nf.propensity[arm, f], nf.outcome[arm, other], fold_label=f
            )
    mu1 = 0.5 * (mu[1, "A"] + mu[1, "B"])
    mu0 = 0.5 * (mu[0, "A"] + mu[0, "B"])
    tau = mu1 - mu0

    if variance == "averaged":
        beta = {arm: nf.beta_avg(arm) for arm in ARMS}
        theta = {arm: nf.theta_avg(arm) for arm in ARMS}
        omega, v0, v1, v = estimate_variance(dataset, beta, theta, tau)
    else:
        parts = np.array([
            estimate_variance(
                dataset,
                {arm: nf.outcome[arm, f].beta for arm in ARMS},
                {arm: nf.propensity[arm, f].theta for arm in ARMS},
                tau,
            )
            for f in FOLDS
        ]).mean(axis=0)
        omega, v0, v1 = (float(z) for z in parts[:3])
        v = omega + v0 + v1

    ci = confidence_interval(tau, v, dataset.n, level)
    est = SdrEstimate(
        tau_hat=float(tau),
        mu_hat=mu,
        omega_hat=omega,
        v0_hat=v0,
        v1_hat=v1,
        v_hat=v,
        n=dataset.n,
        ci=ci,
        level=level,
        diagnostics=_diagnostics(dataset, nf, cfg),
    )
    return est, nf


@dataclass
class InfluenceDiagnostics:
    psi: np.ndarray
    v_star: float

    @property
    def mean(self) -> float:
        return float(self.psi.mean())


def influence_values(
    dataset: Dataset,
    tau: float,
    beta1: np.ndarray,
    beta0: np.ndarray,
    theta: np.ndarray,
) -> InfluenceDiagnostics:
    """Efficient influence function evaluated at supplied parameters.

    ``theta`` parametrizes ``P(W = 1 | X)``.
    """
    x, y, w = dataset.x, dataset.y, dataset.w
    z = x @ theta
    e = 1.0 / (1.0 + np.exp(-np.clip(z, -CLAMP, CLAMP)))
    if np.any(e <= 0) or np.any(e >= 1):
        raise ValueError("propensity is numerically 0 or 1")
    psi = (
        x @ (beta1 - beta0)
        + w * (y - x @ beta1) / e
        - (1 - w) * (y - x @ beta0) / (1.0 - e)
        - tau
    )
    return InfluenceDiagnostics(psi=psi, v_star=float(np.mean(psi**2)))
