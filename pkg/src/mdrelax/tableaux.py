"""Extended Butcher tableaux for multiderivative Runge-Kutta methods.

A tableau with ``s`` stages and ``m`` derivatives stores ``A[k]`` and ``b[k]``
for ``k = 0..m-1`` (coefficients of ``g^(k+1)``), the abscissae ``c`` and,
for collocation schemes, the continuous-output polynomials ``b^(k)(theta)``
as ascending coefficient arrays of shape ``(m, s, degree + 1)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

import mpmath
import numpy as np

from .exceptions import UnsupportedOperation

__all__ = [
    "MdrkTableau",
    "available",
    "continuous_weights",
    "exact_coefficients",
    "generate_hb",
    "mp_coefficients",
    "registry_get",
    "register",
    "tableau_from_json",
    "tableau_to_json",
]


@dataclass(frozen=True, eq=False)
class MdrkTableau:
    name: str
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    order: int
    continuous: Optional[np.ndarray] = None
    # exact Fraction coefficients (A, b, c, continuous) when available
    exact: Optional[dict] = field(default=None, repr=False)

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        b = np.array(self.b, dtype=float)
        c = np.array(self.c, dtype=float)
        if A.ndim != 3 or A.shape[1] != A.shape[2]:
            raise ValueError("A must have shape (m, s, s)")
        m, s, _ = A.shape
        if b.shape != (m, s) or c.shape != (s,):
            raise ValueError(f"inconsistent shapes: A{A.shape}, b{b.shape}, c{c.shape}")
        if not 1 <= m <= 4:
            raise ValueError("tableaux with 1..4 derivatives are supported")
        if not np.allclose(A[0].sum(axis=1), c, rtol=0, atol=1e-12):
            raise ValueError(f"{self.name}: row sums of A^(1) do not match c")
        arrays = [A, b, c]
        if self.continuous is not None:
            cont = np.array(self.continuous, dtype=float)
            if cont.ndim != 3 or cont.shape[:2] != (m, s):
                raise ValueError("continuous weights must have shape (m, s, degree+1)")
            object.__setattr__(self, "continuous", cont)
            arrays.append(cont)
        for arr in arrays:
            arr.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def s(self):
        return self.A.shape[1]

    @property
    def is_explicit(self):
        return all(np.all(np.triu(Ak) == 0.0) for Ak in self.A)

    @property
    def explicit_stages(self):
        """Indices of stages whose rows vanish in every ``A^(k)`` (``y^i = u^n``)."""
        return [i for i in range(self.s) if not np.any(self.A[:, i, :])]

    def __repr__(self):
        kind = "explicit" if self.is_explicit else "implicit"
        return f"MdrkTableau({self.name!r}, s={self.s}, m={self.m}, order={self.order}, {kind})"


def continuous_weights(tab, theta):
    """Evaluate ``b^(k)(theta)`` for all ``k``; returns an ``(m, s)`` array."""
    if tab.continuous is None:
        raise UnsupportedOperation(f"{tab.name} has no continuous output")
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta={theta} outside [0, 1]; extrapolation is not supported")
    return np.polynomial.polynomial.polyval(theta, tab.continuous.transpose(2, 0, 1))


# ---------------------------------------------------------------------------
# registry
#
# Each entry is a builder ``(q, sqrt) -> dict`` so the same definition yields
# float, exact Fraction or high-precision mpmath coefficients.

def _zeros(s):
    return [[0] * s for _ in range(s)]


def _ct32(q, sqrt):
    return dict(
        c=[0, 1],
        A=[[[0, 0], [1, 0]], [[0, 0], [q(1, 2), 0]]],
        b=[[q(2, 3), q(1, 3)], [q(1, 6), 0]],
        order=3,
    )


def _ct42(q, sqrt):
    return dict(
        c=[0, q(1, 2)],
        A=[[[0, 0], [q(1, 2), 0]], [[0, 0], [q(1, 8), 0]]],
        b=[[1, 0], [q(1, 6), q(1, 3)]],
        order=4,
    )


def _ct53(q, sqrt):
    return dict(
        c=[0, q(2, 5), 1],
        A=[
            [[0, 0, 0], [q(2, 5), 0, 0], [1, 0, 0]],
            [[0, 0, 0], [q(2, 25), 0, 0], [q(-1, 4), q(3, 4), 0]],
        ],
        b=[[1, 0, 0], [q(1, 8), q(25, 72), q(1, 36)]],
        order=5,
    )


def _to52(q, sqrt):
    return dict(
        c=[0, q(2, 5)],
        A=[
            [[0, 0], [q(2, 5), 0]],
            [[0, 0], [q(2, 25), 0]],
            [[0, 0], [q(4, 375), 0]],
        ],
        b=[[1, 0], [q(1, 2), 0], [q(1, 16), q(5, 48)]],
        order=5,
    )


def _to73(q, sqrt):
    r2 = sqrt(2)
    c2 = (3 - r2) / 7
    c3 = (3 + r2) / 7
    a32 = (122 + 71 * r2) / 7203
    return dict(
        c=[0, c2, c3],
        A=[
            [[0, 0, 0], [c2, 0, 0], [c3, 0, 0]],
            [[0, 0, 0], [c2 ** 2 / 2, 0, 0], [c3 ** 2 / 2, 0, 0]],
            [[0, 0, 0], [c2 ** 3 / 6, 0, 0], [c3 ** 3 / 6 - a32, a32, 0]],
        ],
        b=[
            [1, 0, 0],
            [q(1, 2), 0, 0],
            [q(1, 30), q(1, 15) + 13 * r2 / 480, q(1, 15) - 13 * r2 / 480],
        ],
        order=7,
    )


def _ssp32(q, sqrt):
    return dict(
        c=[0, 1],
        A=[[[0, 0], [0, 1]], [[q(-1, 6), 0], [q(-1, 6), q(-1, 3)]]],
        b=[[0, 1], [q(-1, 6), q(-1, 3)]],
        order=3,
    )


def _hb32(q, sqrt):
    # u+ = u + dt/3 (f(u) + 2 f(u+)) - dt^2/6 g2(u+)
    return dict(
        c=[0, 1],
        A=[[[0, 0], [q(1, 3), q(2, 3)]], [[0, 0], [0, q(-1, 6)]]],
        b=[[q(1, 3), q(2, 3)], [0, q(-1, 6)]],
        order=3,
        continuous=[
            [[0, 1, -1, q(1, 3)], [0, 0, 1, q(-1, 3)]],
            [[0, 0, 0, 0], [0, 0, q(-1, 2), q(1, 3)]],
        ],
    )


def _hb42(q, sqrt):
    return dict(
        c=[0, 1],
        A=[[[0, 0], [q(1, 2), q(1, 2)]], [[0, 0], [q(1, 12), q(-1, 12)]]],
        b=[[q(1, 2), q(1, 2)], [q(1, 12), q(-1, 12)]],
        order=4,
        continuous=[
            [[0, 1, 0, -1, q(1, 2)], [0, 0, 0, 1, q(-1, 2)]],
            [[0, 0, q(1, 2), q(-2, 3), q(1, 4)], [0, 0, 0, q(-1, 3), q(1, 4)]],
        ],
    )


def _hb63(q, sqrt):
    return dict(
        c=[0, q(1, 2), 1],
        A=[
            [[0, 0, 0], [q(101, 480), q(8, 30), q(55, 2400)], [q(7, 30), q(16, 30), q(7, 30)]],
            [[0, 0, 0], [q(65, 4800), q(-25, 600), q(-25, 8000)], [q(5, 300), 0, q(-5, 300)]],
        ],
        b=[[q(7, 30), q(16, 30), q(7, 30)], [q(5, 300), 0, q(-5, 300)]],
        order=6,
        continuous=[
            [
                [0, 1, 0, q(-23, 3), q(33, 2), q(-68, 5), 4],
                [0, 0, 0, q(16, 3), -8, q(16, 5), 0],
                [0, 0, 0, q(7, 3), q(-17, 2), q(52, 5), -4],
            ],
            [
                [0, 0, q(1, 2), -2, q(13, 4), q(-12, 5), q(2, 3)],
                [0, 0, 0, q(-8, 3), 8, -8, q(8, 3)],
                [0, 0, 0, q(-1, 3), q(5, 4), q(-8, 5), q(2, 3)],
            ],
        ],
    )


def _implicit_euler(q, sqrt):
    return dict(c=[1], A=[[[1]]], b=[[1]], order=1)


def _implicit_midpoint(q, sqrt):
    return dict(c=[q(1, 2)], A=[[[q(1, 2)]]], b=[[1]], order=2)


_BUILDERS: dict[str, Callable] = {
    "CT(3,2)": _ct32,
    "CT(4,2)": _ct42,
    "CT(5,3)": _ct53,
    "TO(5,2)": _to52,
    "TO(7,3)": _to73,
    "SSP-I2DRK3-2s": _ssp32,
    "HB-I2DRK3-2s": _hb32,
    "HB-I2DRK4-2s": _hb42,
    "HB-I2DRK6-3s": _hb63,
    "implicit-Euler": _implicit_euler,
    "implicit-midpoint": _implicit_midpoint,
}

# known schemes whose coefficients are not shipped; importable from JSON
_UNBUNDLED = {"SSP-I2DRK4-5s"}

_imported: dict[str, MdrkTableau] = {}
_cache: dict[str, MdrkTableau] = {}


def available():
    return sorted(set(_BUILDERS) | set(_imported))


def _no_sqrt(x):
    raise TypeError("irrational coefficient")


def _deep(fn, data):
    if isinstance(data, (list, tuple)):
        return [_deep(fn, d) for d in data]
    return fn(data)


def exact_coefficients(name):
    """Exact ``Fraction`` coefficients, or ``None`` when some entry is irrational."""
    builder = _BUILDERS.get(name)
    if builder is None:
        return None
    try:
        raw = builder(Fraction, _no_sqrt)
    except TypeError:
        return None
    return {k: (v if k == "order" else _deep(Fraction, v)) for k, v in raw.items()}


def mp_coefficients(name, dps=40):
    """Coefficients as ``mpmath.mpf`` at ``dps`` decimal digits."""
    builder = _BUILDERS.get(name)
    if builder is None:
        raise KeyError(name)
    with mpmath.workdps(dps):
        raw = builder(lambda n, d=1: mpmath.mpf(n) / d, mpmath.sqrt)
        return {k: (v if k == "order" else _deep(mpmath.mpf, v)) for k, v in raw.items()}


def _float_builder_args():
    return (lambda n, d=1: n / d), math.sqrt


def registry_get(name):
    """Return the registered tableau ``name``."""
    if name in _imported:
        return _imported[name]
    if name in _cache:
        return _cache[name]
    if name in _UNBUNDLED:
        raise UnsupportedOperation(
            f"coefficients for {name} are not bundled; import them with tableau_from_json(..., register=True)"
        )
    builder = _BUILDERS.get(name)
    if builder is None:
        raise KeyError(f"unknown scheme {name!r}; available: {', '.join(available())}")
    exact = exact_coefficients(name)
    raw = builder(*_float_builder_args())
    tab = MdrkTableau(
        name=name,
        A=raw["A"],
        b=raw["b"],
        c=raw["c"],
        order=raw["order"],
        continuous=raw.get("continuous"),
        exact=exact,
    )
    _cache[name] = tab
    return tab


def register(tab):
    """Make ``tab`` available through :func:`registry_get` under its name."""
    _imported[tab.name] = tab
    return tab


# ---------------------------------------------------------------------------
# Hermite-Birkhoff collocation generator

def _falling(n, j):
    out = 1
    for i in range(j):
        out *= n - i
    return out


def _confluent_vandermonde(nodes, mult, one):
    rows = []
    N = sum(mult)
    for ci, mi in zip(nodes, mult):
        for j in range(mi):
            rows.append([
                _falling(n, j) * ci ** (n - j) * one if n >= j else 0 * one
                for n in range(N)
            ])
    return rows


def _solve_fraction(M, rhs_cols):
    """Gauss-Jordan elimination on Fractions; returns ``M^{-1} rhs``."""
    n = len(M)
    aug = [list(M[i]) + list(rhs_cols[i]) for i in range(n)]
    for col in range(n):
        piv = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if piv is None:
            raise np.linalg.LinAlgError("singular Hermite interpolation system")
        aug[col], aug[piv] = aug[piv], aug[col]
        p = aug[col][col]
        aug[col] = [v / p for v in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                fac = aug[r][col]
                aug[r] = [a - fac * b for a, b in zip(aug[r], aug[col])]
    return [row[n:] for row in aug]


def _quadrature_order(cont, nodes, mult, one):
    """Order of the quadrature ``int_0^1 phi ~ sum_k sum_i b^(k)_i phi^(k-1)(c_i)``."""
    m = len(cont)
    s = len(nodes)
    b = [[sum(cont[k][i]) for i in range(s)] for k in range(m)]
    deg = 0
    while deg < 64:
        exact = one / (deg + 1)
        approx = 0 * one
        for k in range(m):
            for i in range(s):
                if k < mult[i]:
                    approx += b[k][i] * _falling(deg, k) * (nodes[i] ** (deg - k) if deg >= k else 0)
        if abs(approx - exact) > (0 if isinstance(one, Fraction) else 1e-12):
            return deg
        deg += 1
    return deg


def generate_hb(m, s=None, c=None, multiplicities=None, name=None):
    """Hermite-Birkhoff collocation tableau with ``m`` derivatives and ``s`` stages.

    The derivative ``u'`` is replaced on each step by the Hermite interpolant
    matching ``g^(1) .. g^(mult_i)`` at every node ``c_i``; stages and update are
    integrals of that interpolant.  Rational nodes give exact coefficients.
    """
    if c is None:
        if s is None:
            raise ValueError("give either s or c")
        if s < 2:
            raise ValueError("equidistant nodes need s >= 2")
        c = [Fraction(i, s - 1) for i in range(s)]
    c = list(c)
    if s is None:
        s = len(c)
    if len(c) != s:
        raise ValueError(f"len(c)={len(c)} does not match s={s}")
    if multiplicities is None:
        multiplicities = [m] * s
    mult = [int(k) for k in multiplicities]
    if len(mult) != s:
        raise ValueError("one multiplicity per node required")
    if any(k < 1 or k > m for k in mult):
        raise ValueError(f"multiplicities must lie in 1..{m}")

    rational = all(isinstance(ci, (int, Fraction)) for ci in c)
    if rational:
        nodes = [Fraction(ci) for ci in c]
        one = Fraction(1)
    else:
        nodes = [float(ci) for ci in c]
        one = 1.0
    if any(b <= a for a, b in zip(nodes, nodes[1:])):
        raise ValueError("nodes must be distinct and strictly increasing (confluent nodes are not allowed)")
    if nodes[0] < 0 or nodes[-1] > 1:
        raise ValueError("nodes must lie in [0, 1]")

    N = sum(mult)
    V = _confluent_vandermonde(nodes, mult, one)
    if rational:
        ident = [[one if i == j else 0 * one for j in range(N)] for i in range(N)]
        coeffs = _solve_fraction(V, ident)
    else:
        Vf = np.array(V, dtype=float)
        coeffs = np.linalg.solve(Vf, np.eye(N))
        resid = np.linalg.norm(Vf @ coeffs - np.eye(N), ord=np.inf)
        if not np.all(np.isfinite(coeffs)) or resid > 1e-13:
            raise np.linalg.LinAlgError(
                f"Hermite system residual {resid:.2e} (condition ~{np.linalg.cond(Vf):.2e})"
            )
        coeffs = coeffs.tolist()

    # column index of condition (node i, derivative j)
    cols = {}
    pos = 0
    for i, mi in enumerate(mult):
        for j in range(mi):
            cols[i, j] = pos
            pos += 1

    # continuous weights: b^(k)_i(theta) = int_0^theta L_{i,k-1}
    cont = []
    for k in range(m):
        per_stage = []
        for i in range(s):
            poly = [0 * one] * (N + 1)
            if k < mult[i]:
                col = cols[i, k]
                for n in range(N):
                    poly[n + 1] = coeffs[n][col] / (n + 1)
            per_stage.append(poly)
        cont.append(per_stage)

    def peval(poly, x):
        acc = 0 * one
        for a in reversed(poly):
            acc = acc * x + a
        return acc

    A = [[[peval(cont[k][j], nodes[i]) for j in range(s)] for i in range(s)] for k in range(m)]
    b = [[peval(cont[k][i], one) for i in range(s)] for k in range(m)]
    order = _quadrature_order(cont, nodes, mult, one)
    if name is None:
        name = f"HB-I{m}DRK{order}-{s}s"
        if any(k != m for k in mult):
            name += "[" + ",".join(map(str, mult)) + "]"
    exact = None
    if rational:
        exact = dict(A=A, b=b, c=nodes, order=order, continuous=cont)
    return MdrkTableau(
        name=name,
        A=_deep(float, A),
        b=_deep(float, b),
        c=[float(x) for x in nodes],
        order=order,
        continuous=_deep(float, cont),
        exact=exact,
    )


# ---------------------------------------------------------------------------
# JSON interchange

def tableau_to_json(tab):
    data = {
        "name": tab.name,
        "m": tab.m,
        "s": tab.s,
        "c": tab.c.tolist(),
        "A": tab.A.tolist(),
        "b": tab.b.tolist(),
        "order": tab.order,
        "continuous": None if tab.continuous is None else tab.continuous.tolist(),
    }
    return json.dumps(data, indent=2)


def tableau_from_json(text, register_it=False):
    data = json.loads(text)
    tab = MdrkTableau(
        name=data["name"],
        A=data["A"],
        b=data["b"],
        c=data["c"],
        order=int(data["order"]),
        continuous=data.get("continuous"),
    )
    if tab.m != data.get("m", tab.m) or tab.s != data.get("s", tab.s):
        raise ValueError("declared m/s do not match coefficient shapes")
    if register_it:
        register(tab)
    return tab
