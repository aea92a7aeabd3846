"""One-step advancement with explicit or implicit multiderivative tableaux."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from math import factorial
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .core import DerivativeChain, as_state
from .exceptions import (
    EvaluationError,
    GmresStagnation,
    NewtonConvergenceError,
    StepFailure,
    UnsupportedOperation,
)
from .tableaux import MdrkTableau, continuous_weights

__all__ = [
    "ImplicitSolveConfig",
    "NewtonCache",
    "StepRecord",
    "continuous_output",
    "hermite_degree_derivs",
    "hermite_interpolant",
    "hermite_quintic",
    "step",
    "step_explicit",
    "step_implicit",
]

log = logging.getLogger(__name__)

DENSE_LIMIT = 512


@dataclass(frozen=True)
class ImplicitSolveConfig:
    newton_abs_tol: float = 1e-12
    newton_rel_tol: float = 1e-10
    max_newton_iters: int = 25
    jacobian_strategy: str = "auto"  # "auto" | "dense-fd" | "matrix-free-gmres"
    gmres_restart: int = 30
    gmres_tol: float = 1e-10
    gmres_maxiter: int = 20
    # simplified Newton refreshes the Jacobian once contraction exceeds this
    refresh_contraction: float = 0.5

    def __post_init__(self):
        if self.newton_abs_tol <= 0 or self.newton_rel_tol <= 0 or self.gmres_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_newton_iters < 1:
            raise ValueError("max_newton_iters must be >= 1")
        if self.jacobian_strategy not in ("auto", "dense-fd", "matrix-free-gmres"):
            raise ValueError(f"unknown jacobian strategy {self.jacobian_strategy!r}")


@dataclass
class NewtonCache:
    """Factorized stage Jacobian carried between steps of one trajectory."""

    key: Optional[tuple] = None
    lu: Optional[tuple] = None
    refreshes: int = 0


@dataclass
class StepRecord:
    t: float
    dt: float
    u0: np.ndarray
    u1: np.ndarray
    stages: np.ndarray            # (s, d)
    stage_derivs: np.ndarray      # (m, s, d): g^(k+1)(y^i)
    start_derivs: list            # g^(k)(u^n), k = 1..
    end_derivs: list              # g^(k)(u^{n+1}), k = 1..
    tableau: MdrkTableau
    chain: DerivativeChain = field(repr=False)
    newton_iterations: int = 0
    residual: float = 0.0

    @property
    def t1(self):
        return self.t + self.dt


def hermite_degree_derivs(tab):
    """Endpoint derivatives used by the Hermite interpolant for ``tab``.

    Two (quintic) up to order 5; three (septic) from order 6, where the
    quintic's O(dt^6) interpolation error would dominate the entropy estimate.
    """
    return 2 if tab.order <= 5 else 3


def _endpoint_order(chain, tab):
    # enough derivatives for the next step's first stage and the Hermite interpolant
    return min(chain.m, max(tab.m, hermite_degree_derivs(tab)))


def _weighted(coef, G, dt):
    """sum_k dt^k sum_j coef[k, j] G[k, j]."""
    out = np.zeros(G.shape[2])
    h = 1.0
    for k in range(coef.shape[0]):
        h *= dt
        if np.any(coef[k]):
            out += h * (coef[k] @ G[k])
    return out


def _check_chain(chain, tab):
    if chain.m < tab.m:
        raise ValueError(f"{tab.name} needs {tab.m} derivatives, chain provides {chain.m}")


def _start(chain, u, kmax, start_derivs):
    if start_derivs is not None and len(start_derivs) >= kmax:
        return [np.asarray(g, dtype=float) for g in start_derivs[:kmax]]
    return chain.evaluate(u, kmax)


def step_explicit(chain, tab, t, u, dt, start_derivs=None):
    """Advance one step with an explicit tableau."""
    _check_chain(chain, tab)
    if not tab.is_explicit:
        raise ValueError(f"{tab.name} is implicit; use step_implicit")
    u = as_state(u)
    s, m, d = tab.s, tab.m, u.size
    kend = _endpoint_order(chain, tab)
    G = np.full((m, s, d), np.nan)
    Y = np.empty((s, d))
    start = None
    for i in range(s):
        y = u + _weighted(tab.A[:, i, :i], G[:, :i], dt) if i else u.copy()
        if not np.all(np.isfinite(y)):
            raise StepFailure(f"stage {i} is non-finite", stage=i)
        Y[i] = y
        try:
            if i == 0 and not np.any(tab.A[:, 0, :]):
                start = _start(chain, u, max(m, kend), start_derivs)
                gs = start[:m]
            else:
                gs = chain.evaluate(y, m)
        except EvaluationError as exc:
            raise StepFailure(f"stage {i}: {exc}", stage=i) from exc
        for k in range(m):
            G[k, i] = gs[k]
    u1 = u + _weighted(tab.b, G, dt)
    if not np.all(np.isfinite(u1)):
        raise StepFailure("update is non-finite", stage=s)
    if start is None:
        start = _start(chain, u, kend, start_derivs)
    end = chain.evaluate(u1, kend)
    return StepRecord(t, dt, u, u1, Y, G, start[:kend], end, tab, chain)


def _strategy(cfg, n):
    if cfg.jacobian_strategy != "auto":
        return cfg.jacobian_strategy
    return "dense-fd" if n <= DENSE_LIMIT else "matrix-free-gmres"


def step_implicit(chain, tab, t, u, dt, cfg=None, start_derivs=None, cache=None):
    """Advance one step with an implicit tableau by Newton's method on all stages."""
    cfg = cfg or ImplicitSolveConfig()
    _check_chain(chain, tab)
    u = as_state(u)
    s, m, d = tab.s, tab.m, u.size
    kend = _endpoint_order(chain, tab)
    fixed = tab.explicit_stages
    free = [i for i in range(s) if i not in fixed]
    start = _start(chain, u, max(m, kend), start_derivs)

    G = np.empty((m, s, d))
    for i in fixed:
        for k in range(m):
            G[k, i] = start[k]
    A_free = tab.A[:, free, :]
    nf = len(free)
    n = nf * d

    def stage_values(Yf):
        Ys = np.empty((s, d))
        Ys[fixed] = u
        Ys[free] = Yf.reshape(nf, d)
        return Ys

    def residual(Yf):
        Ys = stage_values(Yf)
        for i in free:
            gs = chain.evaluate(Ys[i], m)
            for k in range(m):
                G[k, i] = gs[k]
        r = np.empty((nf, d))
        for a, i in enumerate(free):
            r[a] = Ys[i] - u - _weighted(tab.A[:, i, :], G, dt)
        return r.reshape(-1)

    tol = cfg.newton_abs_tol + cfg.newton_rel_tol * np.linalg.norm(u)
    strategy = _strategy(cfg, n)
    Y = np.tile(u, nf)
    key = (tab.name, dt, n)
    lu = cache.lu if cache is not None and cache.key == key else None

    def dense_jacobian(Yf, r0):
        h = np.sqrt(np.finfo(float).eps) * (1.0 + np.linalg.norm(Yf))
        J = np.empty((n, n))
        for col in range(n):
            Yp = Yf.copy()
            Yp[col] += h
            J[:, col] = (residual(Yp) - r0) / h
        residual(Yf)  # restore stage derivatives at Yf
        return scipy.linalg.lu_factor(J)

    def jvp(Yf, V):
        Ys = stage_values(Yf)
        Vs = np.zeros((s, d))
        Vs[free] = V.reshape(nf, d)
        dG = np.zeros((m, s, d))
        for i in free:
            for k in range(m):
                dG[k, i] = chain.directional(k + 1, Ys[i], Vs[i])
        out = np.empty((nf, d))
        for a, i in enumerate(free):
            out[a] = Vs[i] - _weighted(A_free[:, a, :], dG, dt)
        return out.reshape(-1)

    iters = 0
    try:
        r = residual(Y)
    except EvaluationError as exc:
        raise StepFailure(f"initial residual: {exc}") from exc
    rnorm = np.linalg.norm(r)
    while True:
        iters += 1
        if rnorm <= tol:
            break
        if iters > cfg.max_newton_iters:
            raise NewtonConvergenceError(
                f"{tab.name}: Newton did not converge in {cfg.max_newton_iters} iterations "
                f"(residual {rnorm:.3e}, tolerance {tol:.3e})",
                residual=rnorm,
            )
        if strategy == "dense-fd":
            fresh = lu is None
            if fresh:
                lu = dense_jacobian(Y, r)
                if cache is not None:
                    cache.refreshes += 1
            delta = scipy.linalg.lu_solve(lu, -r)
        else:
            fresh = True
            op = scipy.sparse.linalg.LinearOperator((n, n), matvec=lambda v, Yc=Y.copy(): jvp(Yc, v))
            delta, info = scipy.sparse.linalg.gmres(
                op, -r, rtol=cfg.gmres_tol, restart=cfg.gmres_restart, maxiter=cfg.gmres_maxiter
            )
            if info != 0:
                lin = np.linalg.norm(op.matvec(delta) + r)
                if lin > 1e-2 * rnorm:
                    raise GmresStagnation(
                        f"GMRES stagnated: linear residual {lin:.3e} vs Newton residual {rnorm:.3e}",
                        residual=rnorm,
                    )
        Y = Y + delta
        try:
            r = residual(Y)
        except EvaluationError as exc:
            raise StepFailure(f"Newton iterate became invalid: {exc}", residual=rnorm) from exc
        new = np.linalg.norm(r)
        if not np.isfinite(new):
            raise NewtonConvergenceError(f"{tab.name}: Newton diverged", residual=new)
        if strategy == "dense-fd" and new > tol:
            theta = new / rnorm
            if theta > cfg.refresh_contraction:
                if fresh and new >= rnorm:
                    # fresh Jacobian did not help: accept round-off floor or give up
                    if np.linalg.norm(delta) <= 1e-13 * (1.0 + np.linalg.norm(Y)):
                        rnorm = new
                        break
                lu = None
            else:
                # refresh when the linear rate would need more iterations than a
                # new Jacobian costs (n residuals) or than the budget allows
                needed = np.log(tol / new) / np.log(theta) if theta > 0 else 0.0
                if needed > min(cfg.max_newton_iters - iters, n + 3):
                    lu = None
        rnorm = new

    if cache is not None and strategy == "dense-fd":
        cache.key, cache.lu = key, lu
    Ys = stage_values(Y)
    u1 = u + _weighted(tab.b, G, dt)
    if not np.all(np.isfinite(u1)):
        raise StepFailure("update is non-finite", stage=s)
    end = chain.evaluate(u1, kend)
    return StepRecord(t, dt, u, u1, Ys, G.copy(), start[:kend], end, tab, chain,
                      newton_iterations=iters, residual=float(rnorm))


def step(chain, tab, t, u, dt, cfg=None, start_derivs=None, cache=None):
    if tab.is_explicit:
        return step_explicit(chain, tab, t, u, dt, start_derivs)
    return step_implicit(chain, tab, t, u, dt, cfg, start_derivs, cache)


@lru_cache(maxsize=None)
def _hermite_inverse(k):
    # coefficients of theta^k..theta^(2k-1) from the k conditions at theta = 1
    M = np.array([[factorial(j) / factorial(j - i) for j in range(k, 2 * k)] for i in range(k)])
    return np.linalg.inv(M)


def hermite_interpolant(rec, tau, nderiv=2):
    """Two-point Hermite interpolant matching ``u, f, ..., g^(nderiv)`` at both ends.

    ``nderiv=2`` is the quintic interpolant, ``nderiv=3`` the septic one.
    """
    if nderiv < 1:
        raise ValueError("nderiv must be >= 1")
    if len(rec.start_derivs) < nderiv or len(rec.end_derivs) < nderiv:
        raise UnsupportedOperation(f"Hermite interpolation needs g^({nderiv}) at both endpoints")
    if rec.dt == 0:
        return rec.u0.copy()
    theta = (tau - rec.t) / rec.dt
    if theta < -1e-14 or theta > 1 + 1e-14:
        raise ValueError(f"tau={tau} outside the step [{rec.t}, {rec.t1}]")
    theta = min(max(theta, 0.0), 1.0)
    k, dt = nderiv + 1, rec.dt
    left = [rec.u0] + [dt**i * np.asarray(rec.start_derivs[i - 1]) for i in range(1, k)]
    right = [rec.u1] + [dt**i * np.asarray(rec.end_derivs[i - 1]) for i in range(1, k)]
    # Taylor part fixes the low coefficients, the rest solve the conditions at 1
    low = [left[i] / factorial(i) for i in range(k)]
    rhs = [right[i] - sum(factorial(j) / factorial(j - i) * low[j] for j in range(i, k))
           for i in range(k)]
    high = np.tensordot(_hermite_inverse(k), np.array(rhs), axes=1)
    out = np.zeros_like(rec.u0, dtype=float)
    for c in reversed(list(low) + list(high)):
        out = out * theta + c
    return out


def hermite_quintic(rec, tau):
    """Quintic Hermite interpolant through ``u, f, g^(2)`` at both step ends."""
    return hermite_interpolant(rec, tau, 2)


def continuous_output(rec, tab, theta):
    """Dense output ``u^n + sum_k dt^k sum_i b^(k)_i(theta) g^(k)(y^i)``."""
    if tab.continuous is None:
        raise UnsupportedOperation(f"{tab.name} has no continuous output")
    W = continuous_weights(tab, theta)
    return rec.u0 + _weighted(W, rec.stage_derivs, rec.dt)
