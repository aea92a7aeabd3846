"""Linear stability of (relaxed) multiderivative Runge-Kutta methods.

For ``u' = lambda u`` every derivative is ``g^(k)(u) = lambda^k u``, so one step
multiplies the state by

    R(z) = 1 + sum_k z^k b^(k)T (I - sum_k z^k A^(k))^{-1} 1,   z = lambda dt,

and the relaxed update with a fixed parameter ``gamma`` by
``R_gamma(z) = 1 + gamma (R(z) - 1)``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

__all__ = [
    "MonotonicityReport",
    "ScanConfig",
    "StabilityReport",
    "a_alpha_angle",
    "angle_curve",
    "boundary_trace",
    "left_half_plane_samples",
    "rational_stability_function",
    "relaxed_stability",
    "stability_at_infinity",
    "stability_function",
    "verify_monotonicity",
    "write_angles_csv",
    "write_boundary_csv",
]


@dataclass(frozen=True)
class ScanConfig:
    n_rays: int = 2048
    n_radii: int = 400
    r_min: float = 1e-3
    r_max: float = 1e6
    margin: float = 1e-12
    resolution_deg: float = 0.01
    sample_stride: int = 128   # keep every n-th ray in the report samples

    def __post_init__(self):
        if self.n_rays < 1 or self.n_radii < 2:
            raise ValueError("need at least one ray and two radii")
        if not 0 < self.r_min < self.r_max:
            raise ValueError("need 0 < r_min < r_max")
        if self.margin < 0 or self.resolution_deg <= 0:
            raise ValueError("margin must be >= 0 and resolution positive")


@dataclass
class StabilityReport:
    tableau: str
    gamma: float
    alpha_deg: float
    R_at_infinity: complex
    samples: list = field(default_factory=list)   # (z, |R_gamma(z)|)
    scan: Optional[ScanConfig] = None
    exact_infinity: bool = False
    note: str = ""


@dataclass
class MonotonicityReport:
    ok: bool
    gamma1: float
    gamma2: float
    n_samples: int
    n_inside: int                 # samples with |R_gamma2| <= 1
    counterexamples: list = field(default_factory=list)


def _stage_matrices(tab, z):
    """Batched ``I - M(z)`` and ``B(z)`` for an array of ``z``."""
    z = np.asarray(z, dtype=complex).reshape(-1)
    s = tab.s
    M = np.zeros((z.size, s, s), dtype=complex)
    B = np.zeros((z.size, s), dtype=complex)
    zk = np.ones_like(z)
    for k in range(tab.m):
        zk = zk * z
        M += zk[:, None, None] * tab.A[k][None]
        B += zk[:, None] * tab.b[k][None]
    return np.eye(s)[None] - M, B


def _solve_form(tab, z):
    I_M, B = _stage_matrices(tab, z)
    ones = np.ones((I_M.shape[0], tab.s, 1), dtype=complex)
    out = np.empty(I_M.shape[0], dtype=complex)
    try:
        X = np.linalg.solve(I_M, ones)[..., 0]
        out[:] = 1.0 + np.sum(B * X, axis=1)
    except np.linalg.LinAlgError:
        for i in range(I_M.shape[0]):
            try:
                x = np.linalg.solve(I_M[i], ones[i])[:, 0]
                out[i] = 1.0 + B[i] @ x
            except np.linalg.LinAlgError:
                out[i] = complex(np.inf, 0.0)
    return out


def _horner(coef, z):
    out = np.zeros_like(z)
    for c in reversed(coef):
        out = out * z + c
    return out


def stability_function(tab, z, method="rational"):
    """``R(z)`` for scalar or array ``z``; poles are returned as ``inf``.

    ``method="rational"`` evaluates the numerator and denominator polynomials,
    which stays accurate for large ``|z|`` where the stage solve loses digits
    to cancellation; ``method="solve"`` uses the stage system directly.
    """
    if method not in ("rational", "solve"):
        raise ValueError("method must be 'rational' or 'solve'")
    scalar = np.ndim(z) == 0
    zz = np.asarray(z, dtype=complex)
    flat = zz.reshape(-1)
    if method == "solve":
        out = _solve_form(tab, flat)
    else:
        num, den = _float_rational(tab)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = _horner(num, flat) / _horner(den, flat)
    out[~np.isfinite(out)] = complex(np.inf, 0.0)
    return complex(out[0]) if scalar else out.reshape(zz.shape)


def relaxed_stability(tab, gamma, z):
    """``R_gamma(z) = 1 + gamma (R(z) - 1)``."""
    R = stability_function(tab, z)
    return 1.0 + gamma * (R - 1.0)


# -- exact rational form ------------------------------------------------------

def _det_fraction(M):
    M = [row[:] for row in M]
    n = len(M)
    det = Fraction(1)
    for c in range(n):
        piv = next((r for r in range(c, n) if M[r][c] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != c:
            M[c], M[piv] = M[piv], M[c]
            det = -det
        det *= M[c][c]
        for r in range(c + 1, n):
            if M[r][c] != 0:
                f = M[r][c] / M[c][c]
                M[r] = [a - f * b for a, b in zip(M[r], M[c])]
    return det


def _interpolate(xs, ys):
    """Monomial coefficients of the polynomial through ``(xs, ys)`` (Fractions)."""
    n = len(xs)
    coef = [Fraction(0)] * n
    for i in range(n):
        # Lagrange basis polynomial i
        basis = [Fraction(1)]
        denom = Fraction(1)
        for j in range(n):
            if j == i:
                continue
            basis = [Fraction(0)] + basis
            for k in range(len(basis) - 1):
                basis[k] -= xs[j] * basis[k + 1]
            denom *= xs[i] - xs[j]
        for k in range(n):
            coef[k] += ys[i] * basis[k] / denom
    while len(coef) > 1 and coef[-1] == 0:
        coef.pop()
    return coef


def _fraction_coefficients(tab):
    if tab.exact:
        return tab.exact["A"], tab.exact["b"], True
    # binary floats are exact rationals
    A = [[[Fraction(float(v)) for v in row] for row in Ak] for Ak in tab.A]
    b = [[Fraction(float(v)) for v in bk] for bk in tab.b]
    return A, b, False


def _rational_parts(A, b):
    m, s = len(A), len(A[0])
    deg = m * s
    xs = [Fraction(i) for i in range(deg + 1)]
    nums, dens = [], []
    for z in xs:
        IM = [[(Fraction(1) if i == j else Fraction(0))
               - sum(z ** (k + 1) * A[k][i][j] for k in range(m)) for j in range(s)] for i in range(s)]
        Bz = [sum(z ** (k + 1) * b[k][j] for k in range(m)) for j in range(s)]
        dens.append(_det_fraction(IM))
        nums.append(_det_fraction([[IM[i][j] + Bz[j] for j in range(s)] for i in range(s)]))
    return _interpolate(xs, nums), _interpolate(xs, dens)


def _key(tab):
    return (tab.name, tab.A.tobytes(), tab.b.tobytes(), tab.exact is not None)


_RATIONAL_CACHE: dict = {}


def _rational(tab):
    key = _key(tab)
    if key not in _RATIONAL_CACHE:
        A, b, exact = _fraction_coefficients(tab)
        num, den = _rational_parts(A, b)
        _RATIONAL_CACHE[key] = (num, den, exact)
    return _RATIONAL_CACHE[key]


def _float_rational(tab):
    num, den, _ = _rational(tab)
    return [float(c) for c in num], [float(c) for c in den]


def rational_stability_function(tab, exact_only=True):
    """Monomial coefficients ``(numerator, denominator)`` of ``R`` as Fractions.

    Uses ``R = det(I - M + 1 B^T) / det(I - M)`` (matrix determinant lemma) with
    both determinants interpolated from exact evaluations.  Without exact
    tableau coefficients the float entries are used as exact binary rationals,
    unless ``exact_only`` is set, in which case ``None`` is returned.
    """
    num, den, exact = _rational(tab)
    if exact_only and not exact:
        return None
    return list(num), list(den)


def stability_at_infinity(tab):
    """``(R(inf), exact)`` from the degrees and leading coefficients of ``R``.

    ``exact`` is False for tableaux with irrational entries, whose limit is that
    of the rounded float coefficients.
    """
    num, den, exact = _rational(tab)
    dn = len(num) - 1 if any(num) else -1
    dd = len(den) - 1
    if dn > dd:
        return complex(np.inf, 0.0), exact
    if dn < dd:
        return 0j, exact
    return complex(float(num[-1] / den[-1])), exact


# -- A(alpha) scan ------------------------------------------------------------

def _ray_passes(tab, gamma, angle_deg, radii, margin):
    z = radii * np.exp(1j * (np.pi - np.deg2rad(angle_deg)))
    mag = np.abs(relaxed_stability(tab, gamma, z))
    return bool(np.all(mag <= 1.0 + margin)), z, mag


def a_alpha_angle(tab, gamma, scan: Optional[ScanConfig] = None):
    """Largest wedge half-angle (degrees) on which ``|R_gamma| <= 1`` at all samples.

    Rays ``z = r exp(i (pi - a))`` for ``a`` in ``{0} U (0, 90]`` with log-spaced
    radii; the first failing ray is bracketed and bisected to ``resolution_deg``.
    ``R`` has real coefficients, so the conjugate rays need no separate scan.
    """
    scan = scan or ScanConfig()
    R_inf, exact = stability_at_infinity(tab)
    R_inf_gamma = 1.0 + gamma * (R_inf - 1.0) if np.isfinite(R_inf) else R_inf
    if tab.is_explicit:
        return StabilityReport(tab.name, gamma, 0.0, R_inf_gamma, [], scan, exact,
                               "explicit tableau: bounded stability domain")
    radii = np.logspace(np.log10(scan.r_min), np.log10(scan.r_max), scan.n_radii)
    angles = np.concatenate(([0.0], 90.0 * np.arange(1, scan.n_rays + 1) / scan.n_rays))
    samples = []
    last_pass = None
    first_fail = None
    for j, a in enumerate(angles):
        ok, z, mag = _ray_passes(tab, gamma, a, radii, scan.margin)
        if j % scan.sample_stride == 0 or not ok:
            samples.extend(zip(z.tolist(), mag.tolist()))
        if not ok:
            first_fail = a
            break
        last_pass = a
    if first_fail is None:
        alpha = 90.0
    elif last_pass is None:
        alpha = 0.0
    else:
        lo, hi = last_pass, first_fail
        while hi - lo > scan.resolution_deg:
            mid = 0.5 * (lo + hi)
            if _ray_passes(tab, gamma, mid, radii, scan.margin)[0]:
                lo = mid
            else:
                hi = mid
        alpha = lo
    return StabilityReport(tab.name, gamma, float(alpha), R_inf_gamma, samples, scan, exact)


def angle_curve(tab, gammas, scan: Optional[ScanConfig] = None):
    """``[(gamma, alpha_deg)]`` over a grid of relaxation parameters."""
    return [(float(g), a_alpha_angle(tab, g, scan).alpha_deg) for g in gammas]


# -- monotonicity in gamma ----------------------------------------------------

def left_half_plane_samples(n, seed=0, r_max=1e3):
    """``n`` reproducible samples in the closed left half-plane, log-uniform in radius."""
    rng = np.random.default_rng(seed)
    r = 10.0 ** rng.uniform(-3.0, np.log10(r_max), n)
    phi = rng.uniform(np.pi / 2, 3 * np.pi / 2, n)
    return r * np.exp(1j * phi)


def verify_monotonicity(tab, gamma1, gamma2, samples, tol=1e-12, max_report=20):
    """Check that the stability domain of ``R_gamma1`` contains that of ``R_gamma2``.

    For every sample with ``|R_gamma2(z)| <= 1`` require ``|R_gamma1(z)| <= 1 + tol``.
    """
    if not 0 <= gamma1 <= gamma2:
        raise ValueError("need 0 <= gamma1 <= gamma2")
    z = np.asarray(samples, dtype=complex).reshape(-1)
    m2 = np.abs(relaxed_stability(tab, gamma2, z))
    m1 = np.abs(relaxed_stability(tab, gamma1, z))
    inside = m2 <= 1.0
    bad = inside & ~(m1 <= 1.0 + tol)
    counter = [(complex(zi), float(a), float(b)) for zi, a, b in
               zip(z[bad][:max_report], m1[bad][:max_report], m2[bad][:max_report])]
    return MonotonicityReport(not bad.any(), gamma1, gamma2, z.size, int(inside.sum()), counter)


# -- stability boundary -------------------------------------------------------

def boundary_trace(tab, gamma=1.0, n_rays=360, r_min=1e-4, r_max=1e3, n_radii=2000, tol=1e-12):
    """Points with ``|R_gamma(z)| = 1`` found by marching outward along rays.

    Rays cover the closed upper half-plane; the lower half follows by symmetry
    and is appended as conjugates.  Returns an array of complex points.
    """
    radii = np.logspace(np.log10(r_min), np.log10(r_max), n_radii)
    pts = []

    def excess(z):
        v = abs(relaxed_stability(tab, gamma, z))
        return v - 1.0 if np.isfinite(v) else np.inf

    for phi in np.linspace(0.0, np.pi, n_rays):
        e = np.exp(1j * phi)
        mag = np.abs(relaxed_stability(tab, gamma, radii * e)) - 1.0
        mag[~np.isfinite(mag)] = np.inf
        sign = mag > 0
        for i in np.nonzero(sign[1:] != sign[:-1])[0]:
            lo, hi = radii[i], radii[i + 1]
            flo = mag[i]
            while hi - lo > tol * hi:
                mid = 0.5 * (lo + hi)
                fm = excess(mid * e)
                if (fm > 0) == (flo > 0):
                    lo, flo = mid, fm
                else:
                    hi = mid
            pts.append(0.5 * (lo + hi) * e)
    pts = np.array(pts, dtype=complex)
    lower = np.conj(pts[np.abs(pts.imag) > 0])
    return np.concatenate((pts, lower))


# -- CSV export ---------------------------------------------------------------

def write_angles_csv(path, rows, scheme=None):
    """Write ``(gamma, alpha_deg)`` rows (optionally prefixed by the scheme name)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow((["scheme"] if scheme else []) + ["gamma", "alpha_deg"])
        for g, a in rows:
            w.writerow(([scheme] if scheme else []) + [repr(float(g)), repr(float(a))])


def write_boundary_csv(path, points):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["re_z", "im_z"])
        for p in points:
            w.writerow([repr(float(p.real)), repr(float(p.imag))])
