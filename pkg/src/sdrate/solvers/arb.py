"""Minimum-norm approximately balancing weights.

For one arm the primal program is::

    min_gamma  (zeta / n^2) ||gamma||^2 + || mean_i X_i - (1/n) sum_{W_i = arm} gamma_i X_i ||_inf^2

Writing ``||v||_inf^2 = max_u 2 u'v - ||u||_1^2`` and eliminating gamma gives
the dual ``max_u 2 u'm - ||X_a u||^2 / zeta - ||u||_1^2`` with
``gamma = (n / zeta) X_a u``. The dual is a smooth quadratic plus a squared l1
norm, whose prox is a sort-and-threshold. The duality gap certifies the
objective; the dual support identifies the binding balance constraints, on
which a small linear solve recovers the exact optimum.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .config import NotConvergedWarning, SolverConfig

__all__ = ["ArbWeights", "arb_objective", "fit_arb_weights", "prox_l1_squared"]


@dataclass
class ArbWeights:
    gamma: np.ndarray
    index: np.ndarray
    objective: float
    gap: float
    subgrad_residual: float
    iterations: int
    converged: bool
    arm: int


def arb_objective(x: np.ndarray, w: np.ndarray, arm: int, gamma: np.ndarray, zeta: float = 1.0) -> float:
    n = x.shape[0]
    xa = x[np.asarray(w) == arm]
    v = x.mean(axis=0) - xa.T @ gamma / n
    return float(zeta * (gamma @ gamma) / n**2 + np.max(np.abs(v)) ** 2)


def prox_l1_squared(z: np.ndarray, t: float) -> np.ndarray:
    """``argmin_x t ||x||_1^2 + ||x - z||^2 / 2``."""
    a = np.sort(np.abs(z))[::-1]
    if a.size == 0 or a[0] == 0:
        return np.zeros_like(z)
    k = np.arange(1, a.size + 1)
    s = np.cumsum(a) / (1.0 + 2.0 * t * k)
    ok = a - 2.0 * t * s > 0
    kstar = np.flatnonzero(ok)[-1]
    thresh = 2.0 * t * s[kstar]
    return np.sign(z) * np.maximum(np.abs(z) - thresh, 0.0)


def _certificate(u, xa, m, n, zeta):
    xu = xa @ u
    gamma = (n / zeta) * xu
    v = m - xa.T @ gamma / n
    vmax = np.max(np.abs(v)) if v.size else 0.0
    primal = zeta * (gamma @ gamma) / n**2 + vmax**2
    l1 = np.abs(u).sum()
    dual = 2.0 * (u @ m) - (xu @ xu) / zeta - l1**2
    supp = u != 0
    res = max(0.0, vmax - l1)
    if np.any(supp):
        res = max(res, float(np.max(np.abs(np.sign(u[supp]) * v[supp] - l1))))
    return gamma, float(primal), float(primal - dual), float(res)


def _polish(u, gram, m, zeta):
    supp = np.flatnonzero(u)
    if supp.size == 0:
        return None
    sig = np.sign(u[supp])
    lhs = gram[np.ix_(supp, supp)] / zeta + np.outer(sig, sig)
    try:
        uj = np.linalg.solve(lhs, m[supp])
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.sign(uj) == sig):
        return None
    out = np.zeros_like(u)
    out[supp] = uj
    return out


def fit_arb_weights(
    x: np.ndarray,
    w: np.ndarray,
    arm: int,
    cfg: SolverConfig = SolverConfig(),
    zeta: float = 1.0,
) -> ArbWeights:
    """Balancing weights for the units with ``W_i = arm``.

    Parameters
    ----------
    x : array of shape (n, p)
        All units; the balance target is the full-sample covariate mean.
    w : array of shape (n,)
    arm : {0, 1}
    cfg : SolverConfig
        ``max_iter``, ``obj_tol`` (duality gap) and ``grad_tol``
        (subgradient residual) are used.
    zeta : float
        Multiplier on the ``||gamma||^2 / n^2`` term.

    Returns
    -------
    ArbWeights
        ``gamma[k]`` is the weight of unit ``index[k]``.
    """
    w = np.asarray(w)
    idx = np.flatnonzero(w == arm)
    if idx.size == 0:
        raise ValueError(f"arm {arm} has no units")
    n, p = x.shape
    xa = np.ascontiguousarray(x[idx])
    m = x.mean(axis=0)
    gram = xa.T @ xa

    u = np.zeros(p)
    gamma, primal, gap, res = _certificate(u, xa, m, n, zeta)
    if gap <= cfg.obj_tol and res <= cfg.grad_tol:
        return ArbWeights(gamma, idx, primal, gap, res, 0, True, arm)

    lip = 2.0 * np.linalg.norm(xa, 2) ** 2 / zeta
    step = 1.0 / max(lip, 1e-12)
    y = u.copy()
    t = 1.0
    last_supp = None
    it = 0
    for it in range(1, cfg.max_iter + 1):
        grad = 2.0 * (gram @ y) / zeta - 2.0 * m
        u_next = prox_l1_squared(y - step * grad, step)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = u_next + ((t - 1.0) / t_next) * (u_next - u)
        u, t = u_next, t_next
        if it % 10 == 0 or it == cfg.max_iter:
            supp = np.flatnonzero(u)
            if last_supp is not None and np.array_equal(supp, last_supp):
                cand = _polish(u, gram, m, zeta)
                if cand is not None:
                    cert = _certificate(cand, xa, m, n, zeta)
                    if cert[3] <= cfg.grad_tol and cert[2] <= cfg.obj_tol:
                        return ArbWeights(cert[0], idx, cert[1], cert[2], cert[3], it, True, arm)
            last_supp = supp
            gamma, primal, gap, res = _certificate(u, xa, m, n, zeta)
            if gap <= cfg.obj_tol and res <= cfg.grad_tol:
                return ArbWeights(gamma, idx, primal, gap, res, it, True, arm)

    gamma, primal, gap, res = _certificate(u, xa, m, n, zeta)
    warnings.warn(
        f"ARB weights stopped at max_iter (gap {gap:.2e}, residual {res:.2e})",
        NotConvergedWarning,
        stacklevel=2,
    )
    return ArbWeights(gamma, idx, primal, gap, res, it, False, arm)
