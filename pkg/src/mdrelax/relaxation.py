"""Relaxation parameter, entropy estimates and the relaxed update."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .exceptions import DegenerateDirection, RelaxationFailure, UnsupportedOperation
from .stepping import continuous_output, hermite_degree_derivs, hermite_interpolant

__all__ = [
    "RelaxationConfig",
    "RelaxedStep",
    "eta_new_estimate",
    "gamma_general",
    "gamma_quadratic",
    "gll_rule",
    "relax_step",
]

log = logging.getLogger(__name__)

_MODES = ("relaxation", "idt", "off")
_SOLVERS = ("auto", "closed-form-quadratic", "scalar-newton", "bisection")
_ESTIMATORS = ("auto", "conserved", "hermite-quadrature", "continuous-output-quadrature")


@dataclass(frozen=True)
class RelaxationConfig:
    mode: str = "relaxation"
    gamma_solver: str = "auto"
    root_tol: float = 1e-13
    max_root_iters: int = 50
    gamma_bracket: tuple = (0.5, 1.5)
    estimator: str = "auto"
    quadrature_points: Optional[int] = None
    gamma_cap: Optional[float] = None

    def __post_init__(self):
        mode = self.mode.lower()
        object.__setattr__(self, "mode", mode)
        if mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}")
        if self.gamma_solver not in _SOLVERS:
            raise ValueError(f"gamma_solver must be one of {_SOLVERS}")
        if self.estimator not in _ESTIMATORS:
            raise ValueError(f"estimator must be one of {_ESTIMATORS}")
        if self.root_tol <= 0:
            raise ValueError("root_tol must be positive")
        if self.quadrature_points is not None and self.quadrature_points < 2:
            raise ValueError("quadrature_points must be >= 2")
        lo, hi = self.gamma_bracket
        if not 0 < lo < hi:
            raise ValueError("gamma_bracket must satisfy 0 < lo < hi")


@dataclass
class RelaxedStep:
    gamma: float
    u: np.ndarray
    t: float
    eta_new: float
    eta_old: float
    eta: float
    residual: float
    degenerate: bool = False
    clamped: bool = False
    warning: Optional[str] = None


@lru_cache(maxsize=None)
def _gll(n):
    from numpy.polynomial import legendre as L

    if n == 2:
        x = np.array([-1.0, 1.0])
    else:
        c = np.zeros(n)
        c[-1] = 1.0  # P_{n-1}
        inner = L.legroots(L.legder(c))
        # polish interior roots of P'_{n-1} with Newton
        d1, d2 = L.legder(c), L.legder(c, 2)
        for _ in range(3):
            inner = inner - L.legval(inner, d1) / L.legval(inner, d2)
        x = np.concatenate(([-1.0], np.sort(inner), [1.0]))
    c = np.zeros(n)
    c[-1] = 1.0
    w = 2.0 / (n * (n - 1) * L.legval(x, c) ** 2)
    return (x + 1.0) / 2.0, w / 2.0


def gll_rule(n):
    """Gauss-Lobatto-Legendre nodes and weights on ``[0, 1]`` (``2 <= n <= 8``)."""
    if not 2 <= n <= 8:
        raise ValueError(f"Gauss-Lobatto rule with n={n} points is not supported (2..8)")
    x, w = _gll(n)
    return x.copy(), w.copy()


def _degenerate(u0, d):
    return np.linalg.norm(d) <= 1e-14 * (1.0 + np.linalg.norm(u0))


def gamma_quadratic(u0, u1, entropy, eta_new=None):
    """Closed-form relaxation parameter for ``eta(u) = <u, u>``.

    ``eta_new=None`` selects the conservative formula.
    """
    if not entropy.quadratic_norm:
        raise ValueError("closed form requires a quadratic-norm entropy")
    d = u1 - u0
    if _degenerate(u0, d):
        raise DegenerateDirection("baseline increment vanishes")
    ip = entropy.inner
    dd = ip(d, d)
    ud = ip(u0, d)
    if eta_new is None:
        return -2.0 * ud / dd
    return (eta_new - ip(u0, u0) - 2.0 * ud) / dd


def _bisect(F, lo, hi, flo, tol, maxit):
    g = 0.5 * (lo + hi)
    for _ in range(max(maxit, 200)):
        g = 0.5 * (lo + hi)
        fg = F(g)
        if abs(fg) <= tol or hi - lo <= 4 * np.finfo(float).eps * abs(g):
            return g
        if np.sign(fg) == np.sign(flo):
            lo, flo = g, fg
        else:
            hi = g
    return g


def gamma_general(u0, u1, entropy, eta_new, cfg=None):
    """Solve ``eta(u0 + g d) = eta(u0) + g (eta_new - eta(u0))`` for ``g`` near 1."""
    cfg = cfg or RelaxationConfig()
    d = u1 - u0
    if _degenerate(u0, d):
        raise DegenerateDirection("baseline increment vanishes")
    eta0 = entropy(u0)
    slope = eta_new - eta0
    tol = cfg.root_tol * (1.0 + abs(eta0))

    def F(g):
        return entropy(u0 + g * d) - eta0 - g * slope

    if cfg.gamma_solver != "bisection":
        g = 1.0
        for _ in range(cfg.max_root_iters):
            fg = F(g)
            dF = entropy.derivative(u0 + g * d, d) - slope
            degenerate = not np.isfinite(dF) or abs(dF) <= 1e-14 * (1.0 + abs(eta0))
            if abs(fg) <= tol:
                if not degenerate:
                    # one polishing step so residuals do not accumulate over many steps
                    g_pol = g - fg / dF
                    if np.isfinite(g_pol) and abs(F(g_pol)) <= abs(fg):
                        return g_pol
                return g
            if degenerate:
                break
            g_next = g - fg / dF
            if not np.isfinite(g_next) or g_next <= 0 or g_next > 4:
                break
            g = g_next
        log.debug("relaxation Newton failed, falling back to bisection")

    lo, hi = cfg.gamma_bracket
    flo, fhi = F(lo), F(hi)
    while np.sign(flo) == np.sign(fhi) and flo != 0 and fhi != 0:
        if hi >= 4 and lo <= 1e-3:
            raise RelaxationFailure("no sign change of the relaxation equation in (0, 4]")
        lo, hi = max(lo / 2, 1e-3 if lo / 2 < 1e-3 else lo / 2), min(hi * 2, 4.0)
        flo, fhi = F(lo), F(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    return _bisect(F, lo, hi, flo, tol, cfg.max_root_iters)


def _estimator(cfg, entropy):
    if cfg.estimator != "auto":
        return cfg.estimator
    return "conserved" if entropy.kind == "conservative" else "hermite-quadrature"


def _quadrature_points(cfg, estimator, tab):
    if cfg.quadrature_points is not None:
        return cfg.quadrature_points
    # exact for the degree-7 septic interpolant and error-free at order 6-7
    return 5 if tab.order >= 6 else 4


def eta_new_estimate(rec, entropy, cfg=None):
    """Entropy estimate at the end of the step.

    Quadrature of ``(eta' f)`` along a dense output of the step with positive
    Gauss-Lobatto weights, so ``eta' f <= 0`` at the nodes implies
    ``eta_new <= eta(u^n)``.
    """
    cfg = cfg or RelaxationConfig()
    eta0 = entropy(rec.u0)
    est = _estimator(cfg, entropy)
    if est == "conserved":
        return eta0
    if est == "continuous-output-quadrature" and rec.tableau.continuous is None:
        raise UnsupportedOperation(f"{rec.tableau.name} has no continuous output")
    nderiv = hermite_degree_derivs(rec.tableau)
    if est == "hermite-quadrature":
        if rec.tableau.order > 7:
            raise UnsupportedOperation(
                f"Hermite estimate supports order <= 7, {rec.tableau.name} has {rec.tableau.order}")
        if min(len(rec.start_derivs), len(rec.end_derivs)) < nderiv:
            raise UnsupportedOperation(
                f"{rec.tableau.name} needs g^({nderiv}) at the step ends for the Hermite estimate")
    n = _quadrature_points(cfg, est, rec.tableau)
    nodes, weights = gll_rule(n)
    f = rec.chain.f
    total = 0.0
    for theta, w in zip(nodes, weights):
        if theta == 0.0:
            y, fy = rec.u0, rec.start_derivs[0]
        elif theta == 1.0 and est == "hermite-quadrature":
            y, fy = rec.u1, rec.end_derivs[0]
        else:
            if est == "hermite-quadrature":
                y = hermite_interpolant(rec, rec.t + theta * rec.dt, nderiv)
            else:
                y = continuous_output(rec, rec.tableau, theta)
            fy = np.asarray(f(y), dtype=float)
        total += w * entropy.derivative(y, fy)
    return eta0 + rec.dt * total


def relax_step(rec, entropy, cfg=None):
    """Post-process a baseline step; returns the relaxed state and time."""
    cfg = cfg or RelaxationConfig()
    t1 = rec.t + rec.dt
    if cfg.mode == "off":
        eta1 = entropy(rec.u1) if entropy is not None else float("nan")
        eta0 = entropy(rec.u0) if entropy is not None else float("nan")
        return RelaxedStep(1.0, rec.u1, t1, eta1, eta0, eta1, 0.0)

    eta0 = entropy(rec.u0)
    eta_new = eta_new_estimate(rec, entropy, cfg)
    d = rec.u1 - rec.u0
    degenerate = False
    try:
        if cfg.gamma_solver == "closed-form-quadratic" or (
            cfg.gamma_solver == "auto" and entropy.quadratic_norm
        ):
            conservative = _estimator(cfg, entropy) == "conserved"
            gamma = gamma_quadratic(rec.u0, rec.u1, entropy, None if conservative else eta_new)
        else:
            gamma = gamma_general(rec.u0, rec.u1, entropy, eta_new, cfg)
    except DegenerateDirection:
        gamma, degenerate = 1.0, True

    clamped = False
    if cfg.gamma_cap is not None and gamma > cfg.gamma_cap:
        gamma, clamped = cfg.gamma_cap, True

    u = rec.u0 + gamma * d
    eta = entropy(u)
    residual = eta - eta0 - gamma * (eta_new - eta0)
    tol = cfg.root_tol * (1.0 + abs(eta0))
    if clamped and entropy.kind == "dissipative" and eta > eta0 + tol:
        raise RelaxationFailure(f"clamped gamma={gamma} violates entropy dissipation")
    warning = None
    if not degenerate and abs(gamma - 1.0) > 0.5:
        warning = f"relaxation parameter {gamma:.6g} far from 1"
        log.warning(warning)
    t_new = rec.t + gamma * rec.dt if cfg.mode == "relaxation" else t1
    return RelaxedStep(gamma, u, t_new, eta_new, eta0, eta, residual,
                       degenerate=degenerate, clamped=clamped, warning=warning)
