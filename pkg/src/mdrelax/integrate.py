"""Time loop: baseline step, relaxation, and landing on the final time."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .relaxation import RelaxationConfig, relax_step
from .exceptions import StepFailure
from .stepping import ImplicitSolveConfig, NewtonCache, step

__all__ = ["Trajectory", "integrate", "LANDING_TOL", "MAX_LANDING_ITERS"]

log = logging.getLogger(__name__)

LANDING_TOL = 1e-10
MAX_LANDING_ITERS = 3
# a remainder up to this fraction of dt is absorbed into the last step, so that
# relaxation never leaves a sliver step whose gamma is dominated by round-off
LANDING_STRETCH = 0.1
# relaxed steps advancing less than this fraction of h are treated as failures
MIN_ADVANCE = 1e-8


@dataclass
class Trajectory:
    scheme: str
    mode: str
    dt: float
    t: np.ndarray
    u: np.ndarray           # (n_steps + 1, d)
    gamma: np.ndarray       # gamma of the step ending at t[i]; 1 at t[0]
    eta: np.ndarray
    eta_new: np.ndarray
    newton_iterations: int = 0
    warnings: list = field(default_factory=list)

    @property
    def final(self):
        return self.u[-1]

    @property
    def t_final(self):
        return float(self.t[-1])


def _attempt(problem, tab, t, u, h, rcfg, scfg, start, cache):
    rec = step(problem.chain, tab, t, u, h, scfg, start, cache)
    rel = relax_step(rec, problem.entropy, rcfg)
    return rec, rel


def _landing_guess(span, h, gamma, order):
    """Step ``x`` with ``x * gamma(x) = span`` under the model ``gamma - 1 ~ x^(p-1)``."""
    if not gamma > 0:
        return span
    q = max(order - 1, 1)
    a = (gamma - 1.0) / h**q
    x = span / gamma
    for _ in range(8):
        F = x * (1.0 + a * x**q) - span
        dF = 1.0 + (q + 1) * a * x**q
        if dF <= 0:
            return span / gamma
        x_new = x - F / dF
        if not x_new > 0:
            return span / gamma
        if abs(x_new - x) <= 1e-15 * x:
            return x_new
        x = x_new
    return x


def integrate(problem, tab, dt, T, rcfg: Optional[RelaxationConfig] = None,
              scfg: Optional[ImplicitSolveConfig] = None, store=True):
    """Integrate ``problem`` from 0 to ``T`` with nominal step ``dt``.

    In relaxation mode the accepted time is ``t + gamma * h``; the last step is
    rescaled (at most ``MAX_LANDING_ITERS`` times) so that it lands within
    ``LANDING_TOL`` of ``T``.  A final remainder of up to ``LANDING_STRETCH * dt``
    is merged into the last step.  Whatever time is finally reached is recorded,
    and errors should be taken against the solution at that time.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if T < 0:
        raise ValueError("T must be non-negative")
    rcfg = rcfg or RelaxationConfig()
    scfg = scfg or ImplicitSolveConfig()
    cache = NewtonCache()
    entropy = problem.entropy

    t = 0.0
    u = np.array(problem.u0, dtype=float)
    start = None
    eta0 = entropy(u)
    ts, us, gammas, etas, eta_news = [t], [u], [1.0], [eta0], [eta0]
    iters = 0
    warnings = []
    nsteps = 0
    max_steps = 10 * int(np.ceil(T / dt)) + 100

    while T - t > LANDING_TOL:
        last_step = T - t <= (1.0 + LANDING_STRETCH) * dt
        h = T - t if last_step else dt
        rec, rel = _attempt(problem, tab, t, u, h, rcfg, scfg, start, cache)
        landing = last_step or rel.t > T - LANDING_STRETCH * dt
        if landing and rcfg.mode == "relaxation":
            prev = None
            for _ in range(MAX_LANDING_ITERS):
                if abs(rel.t - T) <= LANDING_TOL:
                    break
                if prev is None or rel.t == prev[1]:
                    h_new = _landing_guess(T - t, h, rel.gamma, tab.order)
                else:
                    # secant on h -> t + gamma(h) h
                    h_new = h + (T - rel.t) * (h - prev[0]) / (rel.t - prev[1])
                prev = (h, rel.t)
                h = h_new
                rec, rel = _attempt(problem, tab, t, u, h, rcfg, scfg, start, cache)
        if not rel.t - t > MIN_ADVANCE * h:
            raise StepFailure(f"relaxed step does not advance time (gamma={rel.gamma:.3e} at t={t})")
        nsteps += 1
        if nsteps > max_steps:
            raise StepFailure(f"step limit {max_steps} exceeded at t={t}")
        iters += rec.newton_iterations
        if rel.warning:
            warnings.append((t, rel.warning))
        # cached endpoint derivatives are only valid for the unrelaxed state
        start = rec.end_derivs if rel.gamma == 1.0 else None
        t, u = rel.t, rel.u
        if store:
            ts.append(t)
            us.append(u)
            gammas.append(rel.gamma)
            etas.append(rel.eta)
            eta_news.append(rel.eta_new)
        else:
            last = (t, u, rel.gamma, rel.eta, rel.eta_new)
        if landing:
            break

    if not store and len(ts) == 1 and t > 0:
        for seq, val in zip((ts, us, gammas, etas, eta_news), last):
            seq.append(val)
    return Trajectory(tab.name, rcfg.mode, dt, np.array(ts), np.array(us), np.array(gammas),
                      np.array(etas), np.array(eta_news), iters, warnings)
