"""Dual numbers, derivative chains and entropy functionals.

Right-hand sides are written against the small set of array operations in this
module (``exp``, ``sqrt``, ``stack``, ``linear`` ...).  Those operations accept
plain NumPy arrays as well as :class:`Dual` numbers, so the same code yields
function values, Jacobian-vector products and, with nesting, the higher
temporal derivatives ``g^(k)`` used by multiderivative schemes.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .exceptions import DualDepthError, EvaluationError

__all__ = [
    "Dual",
    "DerivativeChain",
    "EntropyFunctional",
    "as_state",
    "chain_from_f",
    "dual_directional",
    "euclidean_inner",
    "primal",
]

MAX_DUAL_DEPTH = 4
MAX_DERIVATIVES = 4

_tags = itertools.count(1)


def _new_tag():
    return next(_tags)


class Dual:
    """First-order dual number ``val + eps * e`` with array payloads.

    Every perturbation carries a tag.  A newer tag always wraps older ones, so
    nested differentiation never confuses the perturbations of different
    levels.
    """

    __slots__ = ("val", "eps", "tag", "depth")
    # make NumPy defer to our reflected operators instead of building object arrays
    __array_ufunc__ = None

    def __init__(self, val, eps, tag):
        depth = val.depth + 1 if isinstance(val, Dual) else 1
        if depth > MAX_DUAL_DEPTH:
            raise DualDepthError(f"dual nesting depth {depth} exceeds {MAX_DUAL_DEPTH}")
        self.val = val
        self.eps = eps
        self.tag = tag
        self.depth = depth

    def __repr__(self):
        return f"Dual({self.val!r}, {self.eps!r}, tag={self.tag})"

    @property
    def shape(self):
        return np.shape(self.val)

    @property
    def ndim(self):
        return np.ndim(self.val)

    def __len__(self):
        return len(self.val)

    def __getitem__(self, key):
        return Dual(self.val[key], _broadcast_like(self.eps, self.val)[key], self.tag)

    def __neg__(self):
        return Dual(-self.val, -self.eps, self.tag)

    def __pos__(self):
        return self

    def __add__(self, other):
        return _add(self, other)

    def __radd__(self, other):
        return _add(other, self)

    def __sub__(self, other):
        return _add(self, -other)

    def __rsub__(self, other):
        return _add(other, -self)

    def __mul__(self, other):
        return _mul(self, other)

    def __rmul__(self, other):
        return _mul(other, self)

    def __truediv__(self, other):
        return _div(self, other)

    def __rtruediv__(self, other):
        return _div(other, self)

    def __matmul__(self, other):
        return _matmul(self, other)

    def __rmatmul__(self, other):
        return _matmul(other, self)

    def __pow__(self, power):
        if isinstance(power, Dual):
            return exp(power * log(self))
        if power == 2:
            return _mul(self, self)
        v = self.val ** power
        return Dual(v, power * self.val ** (power - 1) * self.eps, self.tag)

    def __rpow__(self, base):
        return exp(self * np.log(base))

    # comparisons act on the primal value; used for guards only
    def __lt__(self, other):
        return primal(self) < primal(other)

    def __le__(self, other):
        return primal(self) <= primal(other)

    def __gt__(self, other):
        return primal(self) > primal(other)

    def __ge__(self, other):
        return primal(self) >= primal(other)


def _top_tag(*xs):
    return max(x.tag for x in xs if isinstance(x, Dual))


def _parts(x, tag):
    if isinstance(x, Dual) and x.tag == tag:
        return x.val, x.eps
    return x, None


def _broadcast_like(e, like):
    shape = np.shape(like)
    if np.shape(e) == shape:
        return e
    return _broadcast_to(e, shape)


def _broadcast_to(x, shape):
    if isinstance(x, Dual):
        return Dual(_broadcast_to(x.val, shape), _broadcast_to(x.eps, shape), x.tag)
    return np.broadcast_to(x, shape)


def _add(x, y):
    t = _top_tag(x, y)
    a, b = _parts(x, t)
    c, d = _parts(y, t)
    if b is None:
        eps = d
    elif d is None:
        eps = b
    else:
        eps = b + d
    return Dual(a + c, eps, t)


def _mul(x, y):
    t = _top_tag(x, y)
    a, b = _parts(x, t)
    c, d = _parts(y, t)
    if b is None:
        eps = a * d
    elif d is None:
        eps = b * c
    else:
        eps = b * c + a * d
    return Dual(a * c, eps, t)


def _div(x, y):
    t = _top_tag(x, y)
    a, b = _parts(x, t)
    c, d = _parts(y, t)
    v = a / c
    if d is None:
        return Dual(v, b / c, t)
    if b is None:
        return Dual(v, -(v * d) / c, t)
    return Dual(v, (b - v * d) / c, t)


def _matmul(x, y):
    t = _top_tag(x, y)
    a, b = _parts(x, t)
    c, d = _parts(y, t)
    if b is None:
        eps = a @ d
    elif d is None:
        eps = b @ c
    else:
        eps = b @ c + a @ d
    return Dual(a @ c, eps, t)


def _unary(name, fn, dfn):
    def op(x):
        if isinstance(x, Dual):
            v = op(x.val)
            return Dual(v, dfn(x.val, v) * x.eps, x.tag)
        return fn(x)

    op.__name__ = name
    return op


exp = _unary("exp", np.exp, lambda a, v: v)
log = _unary("log", np.log, lambda a, v: 1.0 / a)
sqrt = _unary("sqrt", np.sqrt, lambda a, v: 0.5 / v)
sin = _unary("sin", np.sin, lambda a, v: cos(a))
cos = _unary("cos", np.cos, lambda a, v: -sin(a))
sinh = _unary("sinh", np.sinh, lambda a, v: cosh(a))
cosh = _unary("cosh", np.cosh, lambda a, v: sinh(a))
tanh = _unary("tanh", np.tanh, lambda a, v: 1.0 - v * v)


def primal(x):
    """Strip all perturbation levels and return the plain value."""
    while isinstance(x, Dual):
        x = x.val
    return x


def linear(op, x):
    """Apply a linear map ``op`` (acting on arrays) to ``x``, dual-aware."""
    if isinstance(x, Dual):
        return Dual(linear(op, x.val), linear(op, _broadcast_like(x.eps, x.val)), x.tag)
    return op(x)


def dsum(x, axis=None):
    if isinstance(x, Dual):
        return Dual(dsum(x.val, axis), dsum(_broadcast_like(x.eps, x.val), axis), x.tag)
    return np.sum(x, axis=axis)


def dot(x, y):
    return dsum(x * y)


def stack(items, axis=0):
    items = list(items)
    if not any(isinstance(i, Dual) for i in items):
        return np.stack(items, axis=axis)
    t = _top_tag(*items)
    vals, epss = [], []
    for item in items:
        a, b = _parts(item, t)
        vals.append(a)
        epss.append(0.0 * a if b is None else _broadcast_like(b, a))
    return Dual(stack(vals, axis), stack(epss, axis), t)


def concatenate(items, axis=0):
    items = list(items)
    if not any(isinstance(i, Dual) for i in items):
        return np.concatenate(items, axis=axis)
    t = _top_tag(*items)
    vals, epss = [], []
    for item in items:
        a, b = _parts(item, t)
        vals.append(a)
        epss.append(0.0 * a if b is None else _broadcast_like(b, a))
    return Dual(concatenate(vals, axis), concatenate(epss, axis), t)


def _tangent(out, tag):
    if isinstance(out, Dual) and out.tag == tag:
        return _broadcast_like(out.eps, out.val)
    # output does not depend on this perturbation
    return 0.0 * out


def _check_finite(x, what):
    p = np.asarray(primal(x), dtype=float)
    bad = np.flatnonzero(~np.isfinite(p))
    if bad.size:
        raise EvaluationError(f"{what} produced a non-finite value at index {bad[0]}", index=int(bad[0]))


def dual_directional(f, u, v):
    """Return ``f'(u) v`` using one level of dual arithmetic (no truncation error)."""
    tag = _new_tag()
    out = _tangent(f(Dual(u, v, tag)), tag)
    _check_finite(out, "directional derivative")
    if isinstance(out, Dual):
        return out
    return np.array(out, dtype=float)


def as_state(u):
    """Validate and convert to a 1-D float state vector."""
    arr = np.array(u, dtype=float).reshape(-1)
    if arr.size < 1:
        raise ValueError("state vector must have dimension >= 1")
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise EvaluationError(f"state has a non-finite component at index {bad}", index=bad)
    return arr


def _next_derivative(gk, f):
    # g^(k+1)(u) = d/dt g^(k)(u(t)) = (g^(k))'(u) f(u)
    def g_next(u):
        tag = _new_tag()
        return _tangent(gk(Dual(u, f(u), tag)), tag)

    return g_next


@dataclass(frozen=True)
class DerivativeChain:
    """Right-hand side ``f = g^(1)`` together with ``g^(2) ... g^(m)``."""

    derivatives: tuple
    jvp: Optional[Callable] = None

    @property
    def m(self):
        return len(self.derivatives)

    @property
    def f(self):
        return self.derivatives[0]

    def g(self, k, u):
        if not 1 <= k <= self.m:
            raise ValueError(f"derivative order {k} not available (chain has m={self.m})")
        return self.derivatives[k - 1](u)

    def evaluate(self, u, kmax):
        """Return ``[g^(1)(u), ..., g^(kmax)(u)]`` as float arrays."""
        out = []
        for k in range(1, kmax + 1):
            gk = np.asarray(self.derivatives[k - 1](u), dtype=float)
            if not np.all(np.isfinite(gk)):
                bad = int(np.flatnonzero(~np.isfinite(gk))[0])
                raise EvaluationError(f"g^({k}) is non-finite at index {bad}", index=bad)
            out.append(gk)
        return out

    def directional(self, k, u, v):
        """``(g^(k))'(u) v``; uses the supplied jvp for ``k = 1`` when present."""
        if k == 1 and self.jvp is not None:
            return self.jvp(u, v)
        return dual_directional(self.derivatives[k - 1], u, v)


def chain_from_f(f, m, mode="dual-nested", analytic=(), jvp=None):
    """Build a :class:`DerivativeChain` of length ``m`` for ``u' = f(u)``.

    ``mode="analytic-supplied"`` uses the closures in ``analytic`` for
    ``g^(2), g^(3), ...`` and generates any missing higher derivative by
    nested dual differentiation of the last supplied one.  ``mode="dual-nested"``
    ignores ``analytic`` and differentiates ``f`` along its own flow.
    """
    if not 1 <= m <= MAX_DERIVATIVES:
        raise ValueError(f"derivative count m={m} outside 1..{MAX_DERIVATIVES}")
    if mode not in ("dual-nested", "analytic-supplied"):
        raise ValueError(f"unknown chain mode {mode!r}")
    derivs = [f]
    supplied = list(analytic) if mode == "analytic-supplied" else []
    for k in range(2, m + 1):
        if k - 2 < len(supplied) and supplied[k - 2] is not None:
            derivs.append(supplied[k - 2])
        else:
            derivs.append(_next_derivative(derivs[-1], f))
    if jvp is None:
        def jvp(u, v):
            return dual_directional(f, u, v)
    return DerivativeChain(tuple(derivs), jvp)


def euclidean_inner(u, v):
    return float(np.dot(u, v))


_KINDS = ("conservative", "dissipative", "general")


@dataclass(frozen=True)
class EntropyFunctional:
    """Scalar functional ``eta`` with its directional derivative ``eta'(u) v``.

    ``grad_dot`` may be omitted, in which case it is computed with dual
    numbers from ``value``.
    """

    value: Callable
    grad_dot: Optional[Callable] = None
    kind: str = "general"
    quadratic_norm: bool = False
    inner: Optional[Callable] = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"entropy kind must be one of {_KINDS}, got {self.kind!r}")
        if self.quadratic_norm and self.inner is None:
            object.__setattr__(self, "inner", euclidean_inner)

    @classmethod
    def quadratic(cls, inner=None, kind="conservative"):
        """``eta(u) = <u, u>`` for the given inner product (Euclidean by default)."""
        ip = inner or euclidean_inner
        return cls(
            value=lambda u: ip(u, u),
            grad_dot=lambda u, v: 2.0 * ip(u, v),
            kind=kind,
            quadratic_norm=True,
            inner=ip,
        )

    def __call__(self, u):
        return float(self.value(u))

    def derivative(self, u, v):
        if self.grad_dot is not None:
            return float(self.grad_dot(u, v))
        return float(dual_directional(self.value, u, v))
