"""Test problems: nonlinear oscillator, Kepler, dissipated exponential, BBM and KdV."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import factorial
from typing import Callable, Optional

import numpy as np
import scipy.sparse

from . import core
from .core import EntropyFunctional, chain_from_f, linear, primal
from .exceptions import EvaluationError

__all__ = [
    "ProblemInstance",
    "bbm",
    "dissipated_exponential",
    "fd_weights",
    "get_problem",
    "kdv",
    "kepler",
    "oscillator",
    "problem_names",
]


@dataclass(frozen=True)
class ProblemInstance:
    name: str
    chain: core.DerivativeChain = field(repr=False)
    entropy: EntropyFunctional = field(repr=False)
    u0: np.ndarray = field(repr=False)
    exact: Optional[Callable] = field(default=None, repr=False)
    t_final: float = 10.0
    dt: float = 0.1
    params: dict = field(default_factory=dict)
    # quadrature weight of the discrete L2 norm (grid spacing for PDEs)
    norm_weight: float = 1.0
    grid: Optional[np.ndarray] = field(default=None, repr=False)
    reference: Optional[Callable] = field(default=None, repr=False)

    @property
    def d(self):
        return self.u0.size

    def norm(self, e):
        return float(np.sqrt(self.norm_weight * np.dot(e, e)))

    def solution(self, t):
        """Analytic solution, falling back to the numerical reference."""
        if self.exact is not None:
            return self.exact(t)
        if self.reference is not None:
            return self.reference(t)
        raise ValueError(f"{self.name} has neither an analytic nor a reference solution")

    @property
    def has_solution(self):
        return self.exact is not None or self.reference is not None


# ----------------------------------------------------------------------------
# nonlinear oscillator


def oscillator(eps=0.0):
    """Nonlinear oscillator ``u' = (-u2, u1)/|u|^2 - eps u`` with ``eta = |u|^2``."""
    eps = float(eps)
    if eps < 0:
        raise ValueError("damping eps must be >= 0")

    def f(u):
        r2 = u[0] * u[0] + u[1] * u[1]
        return core.stack([-u[1] / r2 - eps * u[0], u[0] / r2 - eps * u[1]])

    def g2(u):
        r2 = u[0] * u[0] + u[1] * u[1]
        return (eps * eps - 1.0 / (r2 * r2)) * u

    def g3(u):
        r2 = u[0] * u[0] + u[1] * u[1]
        return -4.0 * eps / (r2 * r2) * u + (eps * eps - 1.0 / (r2 * r2)) * f(u)

    def jvp(u, v):
        r2 = u[0] ** 2 + u[1] ** 2
        uv = u[0] * v[0] + u[1] * v[1]
        rot_v = np.array([-v[1], v[0]])
        rot_u = np.array([-u[1], u[0]])
        return rot_v / r2 - 2.0 * uv / r2**2 * rot_u - eps * v

    def exact(t):
        r = np.exp(-eps * t)
        phi = t if eps == 0 else np.expm1(2 * eps * t) / (2 * eps)
        return r * np.array([np.cos(phi), np.sin(phi)])

    chain = chain_from_f(f, 4, "analytic-supplied", (g2, g3), jvp=jvp)
    kind = "conservative" if eps == 0 else "dissipative"
    name = "oscillator" if eps == 0 else "damped-oscillator"
    return ProblemInstance(name, chain, EntropyFunctional.quadratic(kind=kind), np.array([1.0, 0.0]),
                           exact=exact, t_final=10.0, dt=0.1, params={"eps": eps})


# ----------------------------------------------------------------------------
# Kepler problem


KEPLER_MIN_RADIUS = 1e-12


def _kepler_radius(q1, q2):
    r2 = q1 * q1 + q2 * q2
    if np.sqrt(float(primal(r2))) < KEPLER_MIN_RADIUS:
        raise EvaluationError("Kepler force evaluated at |q| < 1e-12", index=0)
    return r2


def kepler(eccentricity=0.5, reference_dt=1e-4, momentum="as-printed"):
    """Planar Kepler problem with the angular momentum as functional.

    ``q(0) = (1 - e, 0)``.  ``momentum="as-printed"`` uses
    ``p(0) = (0, sqrt((1 - e)/(1 + e)))``; ``momentum="standard"`` uses the
    perihelion speed ``sqrt((1 + e)/(1 - e))`` of the orbit with eccentricity
    ``e`` and period ``2 pi``.  The former starts at aphelion of a much more
    eccentric orbit (eccentricity 5/6 for e = 1/2, perihelion 1/22).
    """
    e = float(eccentricity)
    if not 0 <= e < 1:
        raise ValueError("eccentricity must lie in [0, 1)")
    if momentum not in ("as-printed", "standard"):
        raise ValueError(f"momentum must be 'as-printed' or 'standard', got {momentum!r}")

    def f(u):
        q1, q2, p1, p2 = u[0], u[1], u[2], u[3]
        r2 = _kepler_radius(q1, q2)
        r3 = r2 * core.sqrt(r2)
        return core.stack([p1, p2, -q1 / r3, -q2 / r3])

    # written with dual-aware operations so that g^(4) can be generated from g^(3)
    def g2(u):
        q1, q2, p1, p2 = u[0], u[1], u[2], u[3]
        r2 = _kepler_radius(q1, q2)
        r = core.sqrt(r2)
        r3, r5 = r2 * r, r2 * r2 * r
        s = q1 * p1 + q2 * p2
        return core.stack([-q1 / r3, -q2 / r3, -p1 / r3 + 3.0 * s * q1 / r5,
                           -p2 / r3 + 3.0 * s * q2 / r5])

    def g3(u):
        q1, q2, p1, p2 = u[0], u[1], u[2], u[3]
        r2 = _kepler_radius(q1, q2)
        r = core.sqrt(r2)
        r3, r5 = r2 * r, r2 * r2 * r
        r6, r7 = r3 * r3, r5 * r2
        s = q1 * p1 + q2 * p2
        pp = p1 * p1 + p2 * p2
        cq = 1.0 / r6 + 3.0 * (pp - 1.0 / r) / r5 - 15.0 * s * s / r7
        cp = 6.0 * s / r5
        return core.stack([-p1 / r3 + 3.0 * s * q1 / r5, -p2 / r3 + 3.0 * s * q2 / r5,
                           cq * q1 + cp * p1, cq * q2 + cp * p2])

    def jvp(u, v):
        q, dq, dp = u[:2], v[:2], v[2:]
        r2 = float(_kepler_radius(u[0], u[1]))
        r = np.sqrt(r2)
        return np.concatenate([dp, -dq / r**3 + 3.0 * (q @ dq) * q / r**5])

    def eta(u):
        return u[0] * u[3] - u[1] * u[2]

    def eta_dot(u, v):
        return u[3] * v[0] - u[2] * v[1] - u[1] * v[2] + u[0] * v[3]

    chain = chain_from_f(f, 4, "analytic-supplied", (g2, g3), jvp=jvp)
    speed = np.sqrt((1.0 - e) / (1.0 + e)) if momentum == "as-printed" else np.sqrt((1.0 + e) / (1.0 - e))
    u0 = np.array([1.0 - e, 0.0, 0.0, speed])
    entropy = EntropyFunctional(eta, eta_dot, kind="conservative")

    def reference(t):
        return _kepler_reference(e, float(t), float(reference_dt), momentum)

    return ProblemInstance("kepler", chain, entropy, u0, reference=reference, t_final=5.0,
                           dt=0.1, params={"eccentricity": e, "reference_dt": reference_dt,
                                           "momentum": momentum})


@lru_cache(maxsize=16)
def _kepler_reference(e, t, dt, momentum):
    from .integrate import integrate
    from .relaxation import RelaxationConfig
    from .tableaux import registry_get

    prob = kepler(e, dt, momentum)
    traj = integrate(prob, registry_get("CT(5,3)"), dt, t, RelaxationConfig(mode="off"))
    out = traj.u[-1].copy()
    out.setflags(write=False)
    return out


# ----------------------------------------------------------------------------
# dissipated exponential entropy


def dissipated_exponential():
    """Scalar ``u' = -exp(u)``, ``u(0) = 1/2`` with ``eta = exp(u)``."""

    def f(u):
        return -core.exp(u)

    analytic = (
        lambda u: core.exp(2.0 * u),
        lambda u: -2.0 * core.exp(3.0 * u),
        lambda u: 6.0 * core.exp(4.0 * u),
    )

    def exact(t):
        return np.array([-np.log(np.exp(-0.5) + t)])

    chain = chain_from_f(f, 4, "analytic-supplied", analytic, jvp=lambda u, v: -np.exp(u) * v)
    entropy = EntropyFunctional(lambda u: core.exp(u[0]), lambda u, v: np.exp(u[0]) * v[0],
                                kind="dissipative")
    return ProblemInstance("dissipated-exponential", chain, entropy, np.array([0.5]),
                           exact=exact, t_final=2.5, dt=0.1)


# ----------------------------------------------------------------------------
# BBM equation, Fourier collocation


def _weighted_inner(w):
    def inner(u, v):
        return float(w * np.dot(u, v))

    return inner


def bbm(N=256, c=1.2, xmin=-90.0, xmax=90.0, split_form=True):
    """BBM solitary wave with periodic Fourier collocation.

    With ``split_form`` the nonlinear term is written as
    ``(1/3) D(u^2) + (1/3) u Du`` which conserves
    ``eta = dx * sum(u^2 + (Du)^2)`` exactly in the semidiscretization; the
    plain form uses ``D(u^2 / 2)``.
    """
    if N < 2 or N & (N - 1):
        raise ValueError(f"BBM grid size must be a power of two, got N={N}")
    L = xmax - xmin
    dx = L / N
    x = xmin + dx * np.arange(N)
    k = 2 * np.pi * np.fft.rfftfreq(N, d=dx)
    ik = 1j * k
    ik[-1] = 0.0  # drop the Nyquist mode so D is real and skew-symmetric
    ksq = np.abs(ik) ** 2
    inv_helm = 1.0 / (1.0 + ksq)

    def D(v):
        return np.fft.irfft(ik * np.fft.rfft(v), n=N)

    def D2(v):
        return np.fft.irfft(-ksq * np.fft.rfft(v), n=N)

    def Hinv_D(v):
        return np.fft.irfft(inv_helm * ik * np.fft.rfft(v), n=N)

    def Hinv(v):
        return np.fft.irfft(inv_helm * np.fft.rfft(v), n=N)

    if split_form:
        def f(u):
            return -(linear(Hinv_D, u + u * u / 3.0) + linear(Hinv, u * linear(D, u)) / 3.0)

        def jvp(u, v):
            return -(linear(Hinv_D, v + 2.0 * u * v / 3.0)
                     + linear(Hinv, v * linear(D, u) + u * linear(D, v)) / 3.0)
    else:
        def f(u):
            return -linear(Hinv_D, u + 0.5 * u * u)

        def jvp(u, v):
            return -linear(Hinv_D, v + u * v)

    def g2(u):
        return jvp(u, f(u))

    def eta(u):
        Du = linear(D, u)
        return dx * core.dsum(u * u + Du * Du)

    ip = _weighted_inner(dx)
    entropy = EntropyFunctional(
        eta,
        lambda u, v: 2.0 * dx * float(np.dot(u, v) - np.dot(u, D2(v))),
        kind="conservative",
        quadratic_norm=True,
        inner=lambda u, v: float(dx * (np.dot(u, v) - np.dot(u, D2(v)))),
    )
    A = 3.0 * (c - 1.0)
    K = 0.5 * np.sqrt(1.0 - 1.0 / c)

    def exact(t):
        xi = np.mod(x - c * t - xmin, L) + xmin
        return A / np.cosh(K * xi) ** 2

    chain = chain_from_f(f, 4, "analytic-supplied", (g2,), jvp=jvp)
    return ProblemInstance("bbm", chain, entropy, exact(0.0), exact=exact, t_final=200.0, dt=0.5,
                           params={"N": N, "c": c, "A": A, "K": K, "domain": (xmin, xmax),
                                   "split_form": split_form},
                           norm_weight=dx, grid=x)


# ----------------------------------------------------------------------------
# KdV equation, split-form central finite differences


def fd_weights(offsets, order):
    """Finite-difference weights at 0 for the given integer offsets.

    Solves the moment conditions sum_j w_j o_j^k = k! [k == order] exactly in
    rational arithmetic; returns Fractions.
    """
    xs = [Fraction(o) for o in offsets]
    n = len(xs)
    if order >= n:
        raise ValueError("need more points than the derivative order")
    if len(set(xs)) != n:
        raise ValueError("offsets must be distinct")
    rows = [[x**k for x in xs] + [Fraction(factorial(k)) if k == order else Fraction(0)]
            for k in range(n)]
    # Gauss-Jordan elimination; the Vandermonde matrix is nonsingular
    for c in range(n):
        piv = next(r for r in range(c, n) if rows[r][c] != 0)
        rows[c], rows[piv] = rows[piv], rows[c]
        inv = 1 / rows[c][c]
        rows[c] = [v * inv for v in rows[c]]
        for r in range(n):
            if r != c and rows[r][c] != 0:
                fac = rows[r][c]
                rows[r] = [a - fac * b for a, b in zip(rows[r], rows[c])]
    return [row[n] for row in rows]


def _periodic_operator(weights, offsets, h, N):
    """Circulant stencil operator (sparse) acting on the last axis."""
    rows, cols, vals = [], [], []
    idx = np.arange(N)
    for wi, o in zip(weights, offsets):
        if wi:
            rows.append(idx)
            cols.append((idx + o) % N)
            vals.append(np.full(N, float(wi) / h))
    M = scipy.sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                shape=(N, N))

    def op(v):
        v = np.asarray(v)
        return (M @ v.reshape(-1, N).T).T.reshape(v.shape)

    op.matrix = M
    return op


def kdv(N=256, stencil_width=17, xmin=0.0, xmax=80.0):
    """KdV soliton on a periodic grid with split-form central finite differences."""
    if stencil_width % 2 == 0 or stencil_width < 5:
        raise ValueError(f"stencil width must be odd and >= 5, got {stencil_width}")
    if stencil_width > N:
        raise ValueError("stencil width exceeds the number of grid points")
    L = xmax - xmin
    dx = L / N
    x = xmin + dx * np.arange(N)
    half = stencil_width // 2
    offsets = list(range(-half, half + 1))
    D1 = _periodic_operator(fd_weights(offsets, 1), offsets, dx, N)
    D3 = _periodic_operator(fd_weights(offsets, 3), offsets, dx**3, N)

    def f(u):
        return -(linear(D1, u * u) + u * linear(D1, u)) / 3.0 - linear(D3, u)

    def jvp(u, v):
        return (-(linear(D1, 2.0 * u * v) + v * linear(D1, u) + u * linear(D1, v)) / 3.0
                - linear(D3, v))

    def g2(u):
        return jvp(u, f(u))

    def exact(t):
        xt = np.mod(x - 2.0 * t / 3.0, L) - L / 2
        return 2.0 / np.cosh(xt / np.sqrt(6.0)) ** 2

    chain = chain_from_f(f, 4, "analytic-supplied", (g2,), jvp=jvp)
    entropy = EntropyFunctional.quadratic(_weighted_inner(dx), kind="conservative")
    return ProblemInstance("kdv", chain, entropy, exact(0.0), exact=exact, t_final=120.0, dt=0.5,
                           params={"N": N, "stencil_width": stencil_width, "domain": (xmin, xmax),
                                   "period": 3.0 * L / 2.0, "D1": D1, "D3": D3},
                           norm_weight=dx, grid=x)


_FACTORIES = {
    "oscillator": lambda **kw: oscillator(kw.get("eps", 0.0)),
    "damped-oscillator": lambda **kw: oscillator(kw.get("eps", 1e-2)),
    "kepler": lambda **kw: kepler(kw.get("eccentricity", 0.5), kw.get("reference_dt", 1e-4),
                                  kw.get("momentum", "as-printed")),
    "dissipated-exponential": lambda **kw: dissipated_exponential(),
    "bbm": lambda **kw: bbm(kw.get("N", 256), kw.get("c", 1.2), split_form=kw.get("split_form", True)),
    "kdv": lambda **kw: kdv(kw.get("N", 256), kw.get("stencil_width", 17)),
}


def get_problem(name, **params):
    """Construct a problem by name; unknown keyword parameters are ignored."""
    try:
        factory = _FACTORIES[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; available: {', '.join(sorted(_FACTORIES))}") from None
    return factory(**params)


def problem_names():
    return sorted(_FACTORIES)
