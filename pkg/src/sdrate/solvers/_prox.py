"""Accelerated proximal gradient for ``f(X theta) + lam * ||theta||_1``.

The smooth part is given as a loss of the linear predictor ``u = X theta``
(value, first and second derivatives in ``u``), which keeps every iteration to
two matrix-vector products. Iterates follow the monotone FISTA scheme, so the
penalized objective of the kept sequence never increases. Once the support
settles, a Newton solve restricted to the active set with fixed signs finishes
the job to high accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["ProxResult", "kkt_residual", "prox_gradient", "soft_threshold"]

_ROUNDOFF = 1e-12


def soft_threshold(z, lam):
    """``sign(z) * max(|z| - lam, 0)``, elementwise."""
    if np.any(np.asarray(lam) < 0):
        raise ValueError("threshold must be nonnegative")
    out = np.sign(z) * np.maximum(np.abs(z) - lam, 0.0)
    return float(out) if np.ndim(out) == 0 else out


def kkt_residual(grad: np.ndarray, theta: np.ndarray, lam: float) -> float:
    """Largest violation of the subgradient optimality conditions."""
    nz = theta != 0
    r = np.where(nz, np.abs(grad + lam * np.sign(theta)), np.maximum(np.abs(grad) - lam, 0.0))
    return float(r.max()) if r.size else 0.0


@dataclass
class ProxResult:
    x: np.ndarray
    objective: float
    grad: np.ndarray
    kkt: float
    iterations: int
    converged: bool
    polished: bool


class SmoothLoss:
    """Smooth loss of the linear predictor; subclasses fill in the pieces."""

    def value(self, u: np.ndarray) -> float:
        raise NotImplementedError

    def deriv(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def curv(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError


def _power_lmax(x: np.ndarray, c: np.ndarray, iters: int = 20) -> float:
    # largest eigenvalue of X' diag(c) X
    v = np.ones(x.shape[1]) / np.sqrt(x.shape[1])
    lam = 0.0
    for _ in range(iters):
        z = x.T @ (c * (x @ v))
        nrm = np.linalg.norm(z)
        if nrm == 0:
            return 0.0
        lam = nrm
        v = z / nrm
    return float(lam)


def _newton_polish(loss, x, lam, theta, tol, max_steps=40):
    supp = np.flatnonzero(theta)
    if supp.size == 0 or supp.size > x.shape[0]:
        return None
    s = np.sign(theta[supp])
    xs = np.ascontiguousarray(x[:, supp])
    th = theta[supp].copy()
    u = xs @ th
    phi = loss.value(u) + lam * (s @ th)
    for _ in range(max_steps):
        g = xs.T @ loss.deriv(u) + lam * s
        if np.max(np.abs(g)) <= 0.1 * tol:
            break
        h = xs.T @ (loss.curv(u)[:, None] * xs)
        try:
            d = np.linalg.solve(h, -g)
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(d)):
            return None
        step = 1.0
        # keep signs fixed: the restricted objective is only valid on this orthant
        shrink = -th / np.where(d != 0, d, np.inf)
        shrink = shrink[(shrink > 0)]
        if shrink.size and shrink.min() <= 1.0:
            return None
        slope = g @ d
        while step > 1e-10:
            cand = th + step * d
            uc = xs @ cand
            with np.errstate(over="ignore", invalid="ignore"):
                pc = loss.value(uc) + lam * (s @ cand)
            if np.isfinite(pc) and pc <= phi + 1e-4 * step * slope + _ROUNDOFF * (1 + abs(phi)):
                break
            step *= 0.5
        else:
            return None
        th, u, phi = cand, uc, pc
    out = np.zeros_like(theta)
    out[supp] = th
    return out


def prox_gradient(
    loss: SmoothLoss,
    x: np.ndarray,
    lam: float,
    x0: np.ndarray | None = None,
    *,
    grad_tol: float = 1e-7,
    max_iter: int = 5000,
    check_every: int = 10,
    guard: Callable[[np.ndarray, float], None] | None = None,
) -> ProxResult:
    """Minimize ``loss(X theta) + lam * ||theta||_1``.

    Parameters
    ----------
    loss : SmoothLoss
    x : array of shape (m, p)
    lam : float
        Nonnegative penalty level.
    x0 : array of shape (p,), optional
        Warm start; zero by default.
    grad_tol : float
        Target for :func:`kkt_residual`.
    max_iter : int
        Cap on proximal steps.
    guard : callable, optional
        Called as ``guard(theta, objective)`` on each kept iterate; may raise
        to abort (used for the separation check of the balancing loss).

    Returns
    -------
    ProxResult
    """
    m, p = x.shape
    theta = np.zeros(p) if x0 is None else np.array(x0, dtype=float)
    u = x @ theta
    obj = loss.value(u) + lam * np.abs(theta).sum()
    if not np.isfinite(obj):
        raise FloatingPointError("objective is not finite at the starting point")

    grad = x.T @ loss.deriv(u)
    kkt = kkt_residual(grad, theta, lam)
    if kkt <= grad_tol:
        return ProxResult(theta, float(obj), grad, kkt, 0, True, False)

    L = max(_power_lmax(x, loss.curv(u)), 1e-12)
    y, uy = theta.copy(), u.copy()
    t = 1.0
    last_support = None
    polished = False
    it = 0
    for it in range(1, max_iter + 1):
        fy = loss.value(uy)
        gy = x.T @ loss.deriv(uy)
        while True:
            z = soft_threshold(y - gy / L, lam / L)
            uz = x @ z
            with np.errstate(over="ignore", invalid="ignore"):
                fz = loss.value(uz)
            d = z - y
            if np.isfinite(fz) and fz <= fy + gy @ d + 0.5 * L * (d @ d) + _ROUNDOFF * (1 + abs(fy)):
                break
            L *= 2.0
            if L > 1e30:
                raise FloatingPointError("step size collapsed in backtracking")
        obj_z = fz + lam * np.abs(z).sum()
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        if obj_z <= obj:
            c = (t - 1.0) / t_next
            y = z + c * (z - theta)
            uy = uz + c * (uz - u)
            theta, u, obj = z, uz, obj_z
            t = t_next
        else:
            # adaptive restart from the kept iterate
            y, uy = theta.copy(), u.copy()
            t = 1.0
        if guard is not None:
            guard(theta, obj)

        if it % check_every == 0 or it == max_iter:
            grad = x.T @ loss.deriv(u)
            kkt = kkt_residual(grad, theta, lam)
            if kkt <= grad_tol:
                return ProxResult(theta, float(obj), grad, kkt, it, True, polished)
            support = np.flatnonzero(theta)
            if last_support is not None and np.array_equal(support, last_support):
                cand = _newton_polish(loss, x, lam, theta, grad_tol)
                if cand is not None:
                    uc = x @ cand
                    with np.errstate(over="ignore", invalid="ignore"):
                        obj_c = loss.value(uc) + lam * np.abs(cand).sum()
                    if np.isfinite(obj_c) and obj_c <= obj + _ROUNDOFF * (1 + abs(obj)):
                        theta, u, obj = cand, uc, obj_c
                        y, uy, t = theta.copy(), u.copy(), 1.0
                        polished = True
                        grad = x.T @ loss.deriv(u)
                        kkt = kkt_residual(grad, theta, lam)
                        if kkt <= grad_tol:
                            return ProxResult(theta, float(obj), grad, kkt, it, True, polished)
            last_support = support

    grad = x.T @ loss.deriv(u)
    kkt = kkt_residual(grad, theta, lam)
    return ProxResult(theta, float(obj), grad, kkt, it, kkt <= grad_tol, polished)
