from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

__all__ = [
    "NotConvergedWarning",
    "OutcomeFit",
    "PropensityFit",
    "SeparationError",
    "SolverConfig",
    "SolverError",
    "penalty_level",
]


class SolverError(RuntimeError):
    pass


class SeparationError(SolverError):
    """The balancing loss is decreasing without bound (perfectly separated arms)."""


class NotConvergedWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class SolverConfig:
    """Penalty multipliers, the l1 cap and solver tolerances.

    Penalties are ``lam = c * sqrt(log(p) / b)`` with ``b`` the number of
    observations the fit sees. The defaults put each penalty at the usual
    ``sqrt(2 log p / b)`` multiple of the score's noise scale: with error
    variance 2 the squared loss gives ``2 * sqrt(2) * sqrt(2) = 4``, and the
    balancing score has per-coordinate sd near ``sqrt(E exp(-X'theta))``,
    about 1.3 at unit index variance, giving roughly 2. Unit multipliers
    under-penalize and the intervals under-cover.
    """

    c_theta: float = 2.0
    c_beta: float = 4.0
    kappa: float = 100.0
    grad_tol: float = 1e-7
    max_iter: int = 5000
    dantzig_tol: float = 1e-6
    obj_tol: float = 1e-10

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"{f.name} must be a positive finite number, got {v!r}")
        if self.max_iter < 1 or int(self.max_iter) != self.max_iter:
            raise ValueError("max_iter must be an integer >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown solver settings: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def penalty_level(c: float, p: int, b: int) -> float:
    """``c * sqrt(log(p) / b)``."""
    return c * math.sqrt(math.log(p) / b)


@dataclass
class PropensityFit:
    """Arm-specific propensity coefficients from the balancing program.

    ``balance_inf_norm`` is the sup-norm of the balance residual recomputed at
    the returned ``theta``.
    """

    theta: np.ndarray
    objective: float
    balance_inf_norm: float
    refined: bool
    iterations: int
    arm: int
    lam: float
    converged: bool = True
    kkt: float = 0.0
    fold: str | None = None
    message: str = ""


@dataclass
class OutcomeFit:
    beta: np.ndarray
    objective: float
    kkt_inf_norm: float
    iterations: int
    lam: float
    converged: bool = True
    arm: int | None = None
    fold: str | None = None
