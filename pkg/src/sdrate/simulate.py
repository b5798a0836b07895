"""Synthetic linear-logistic designs with AR(1) Gaussian covariates.

Covariates are ``N(0, Sigma)`` with ``Sigma_ij = rho**|i-j|``. The propensity
and outcome coefficients share the pattern ``a * (1, 0, 1, 0, ...)`` with
``s`` non-zero entries on odd (1-based) positions. The propensity amplitude is
chosen so that ``theta' Sigma theta = 1`` and the outcome amplitude so that the
homoskedastic R^2 hits its target given error variance 2.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.signal import lfilter

from ._rng import DATA, as_generator, stream
from .data import Dataset

__all__ = [
    "ERROR_VARIANCE",
    "ScenarioConfig",
    "TrueParams",
    "ar1_sample",
    "ar1_cov",
    "make_beta",
    "make_theta",
    "simulate",
]

# variance of a centered chi-square(1) draw
ERROR_VARIANCE = 2.0


@dataclass(frozen=True)
class ScenarioConfig:
    n: int = 500
    p: int = 600
    rho: float = 0.6
    s_theta: int = 2
    s_beta: int = 2
    r_squared: float = 0.5
    heteroskedastic: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.n < 4:
            raise ValueError(f"n must be >= 4, got {self.n}")
        if self.p < 1:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if not -1 < self.rho < 1:
            raise ValueError(f"rho must lie in (-1, 1), got {self.rho}")
        for name in ("s_theta", "s_beta"):
            s = getattr(self, name)
            if s < 1:
                raise ValueError(f"{name} must be >= 1, got {s}")
            if 2 * s - 1 > self.p:
                raise ValueError(f"{name}={s} odd-index support does not fit in p={self.p}")
        if not 0 < self.r_squared < 1:
            raise ValueError(f"r_squared must lie in (0, 1), got {self.r_squared}")

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        return cls(**d)


@dataclass(frozen=True, eq=False)
class TrueParams:
    theta: np.ndarray
    beta1: np.ndarray
    beta0: np.ndarray
    tau_true: float
    a_theta: float
    a_beta: float

    def to_json(self) -> str:
        d = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in asdict(self).items()}
        return json.dumps(d, indent=1)


def ar1_cov(p: int, rho: float) -> np.ndarray:
    idx = np.arange(p)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def ar1_sample(p: int, rho: float, rng=None, size: int | None = None) -> np.ndarray:
    """Draw AR(1) Gaussian rows via ``X_j = rho X_{j-1} + sqrt(1 - rho^2) Z_j``.

    Returns a vector of length ``p`` when ``size`` is None, else a
    ``(size, p)`` matrix of independent rows.
    """
    if not -1 < rho < 1:
        raise ValueError(f"|rho| must be < 1, got {rho}")
    rng = as_generator(rng)
    m = 1 if size is None else size
    z = rng.standard_normal((m, p))
    z[:, 1:] *= math.sqrt(1.0 - rho * rho)
    x = lfilter([1.0], [1.0, -rho], z, axis=1)
    return x[0] if size is None else x


def _support(p: int, s: int) -> np.ndarray:
    if s < 1 or 2 * s - 1 > p:
        raise ValueError(f"support of size {s} on odd indices does not fit in p={p}")
    return np.arange(0, 2 * s, 2)


def _pattern_quad_form(s: int, rho: float) -> float:
    # sum over support pairs of rho**|i-j|, with support spacing 2
    d = np.arange(1, s)
    return s + 2.0 * float(np.sum((s - d) * rho ** (2 * d)))


def make_theta(p: int, s_theta: int, rho: float) -> tuple[np.ndarray, float]:
    """Propensity coefficients with ``theta' Sigma theta = 1``."""
    supp = _support(p, s_theta)
    a = 1.0 / math.sqrt(_pattern_quad_form(s_theta, rho))
    theta = np.zeros(p)
    theta[supp] = a
    return theta, a


def make_beta(p: int, s_beta: int, rho: float, r_squared: float) -> tuple[np.ndarray, np.ndarray, float]:
    """Outcome coefficients with ``beta1' Sigma beta1 = 2 R^2 / (1 - R^2)``.

    ``beta0 = -beta1``.
    """
    if not 0 < r_squared < 1:
        raise ValueError(f"r_squared must lie in (0, 1), got {r_squared}")
    supp = _support(p, s_beta)
    signal = ERROR_VARIANCE * r_squared / (1.0 - r_squared)
    a = math.sqrt(signal / _pattern_quad_form(s_beta, rho))
    beta1 = np.zeros(p)
    beta1[supp] = a
    return beta1, -beta1, a


def simulate(config: ScenarioConfig, rng=None) -> tuple[Dataset, TrueParams]:
    """Draw one dataset from the scenario.

    The stream defaults to the scenario seed. Draw order is fixed (covariates,
    treatment uniforms, arm-1 errors, arm-0 errors) so that equal seeds give
    bit-identical data.
    """
    rng = stream(config.seed, DATA) if rng is None else as_generator(rng)
    n, p = config.n, config.p
    theta, a_theta = make_theta(p, config.s_theta, config.rho)
    beta1, beta0, a_beta = make_beta(p, config.s_beta, config.rho, config.r_squared)

    x = ar1_sample(p, config.rho, rng, size=n)
    lin = x @ theta
    e = 1.0 / (1.0 + np.exp(-lin))
    w = (rng.random(n) < e).astype(np.int8)
    xi1 = rng.standard_normal(n) ** 2 - 1.0
    xi0 = rng.standard_normal(n) ** 2 - 1.0
    if config.heteroskedastic:
        eps1 = np.where(e <= 0.5, 4.0, 1.0) * xi1
    else:
        eps1 = xi1
    y1 = x @ beta1 + eps1
    y0 = x @ beta0 + xi0
    y = np.where(w == 1, y1, y0)
    params = TrueParams(theta=theta, beta1=beta1, beta0=beta0, tau_true=0.0, a_theta=a_theta, a_beta=a_beta)
    return Dataset(x, y, w), params
