"""Smooth losses written as functions of the linear predictor ``u = X theta``."""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from ._prox import SmoothLoss

__all__ = ["BalancingLoss", "LogisticLoss", "WeightedSquaredLoss", "value_and_grad"]


class BalancingLoss(SmoothLoss):
    """Covariate-balancing exponential loss for one arm.

    ``mean( 1{W != arm} u + 1{W = arm} exp(-u) )``. Its gradient in theta is the
    balance residual ``mean( [1 - 1{W = arm}(1 + exp(-u))] X )``.
    """

    def __init__(self, w: np.ndarray, arm: int, m: int | None = None):
        self.a = (np.asarray(w) == arm).astype(float)
        self.m = self.a.size if m is None else m

    def value(self, u):
        return float(np.sum((1.0 - self.a) * u + self.a * np.exp(-u)) / self.m)

    def deriv(self, u):
        return ((1.0 - self.a) - self.a * np.exp(-u)) / self.m

    def curv(self, u):
        return self.a * np.exp(-u) / self.m


class LogisticLoss(SmoothLoss):
    """Mean negative Bernoulli log-likelihood with logit ``u``."""

    def __init__(self, w: np.ndarray):
        self.w = np.asarray(w, dtype=float)
        self.m = self.w.size

    def value(self, u):
        return float(np.sum(np.logaddexp(0.0, u) - self.w * u) / self.m)

    def deriv(self, u):
        return (expit(u) - self.w) / self.m

    def curv(self, u):
        pr = expit(u)
        return pr * (1.0 - pr) / self.m


class WeightedSquaredLoss(SmoothLoss):
    """``(1/m) sum_i omega_i (y_i - u_i)^2``.

    ``m`` may exceed the number of rows so that zero-weight observations can be
    dropped before solving without changing the normalization.
    """

    def __init__(self, y: np.ndarray, omega: np.ndarray, m: int | None = None):
        self.y = np.asarray(y, dtype=float)
        self.omega = np.asarray(omega, dtype=float)
        self.m = self.y.size if m is None else m

    def value(self, u):
        r = self.y - u
        return float(np.sum(self.omega * r * r) / self.m)

    def deriv(self, u):
        return 2.0 * self.omega * (u - self.y) / self.m

    def curv(self, u):
        return 2.0 * self.omega / self.m


def value_and_grad(loss: SmoothLoss, x: np.ndarray, theta: np.ndarray) -> tuple[float, np.ndarray]:
    """Loss value and gradient with respect to ``theta``."""
    u = x @ theta
    return loss.value(u), x.T @ loss.deriv(u)
