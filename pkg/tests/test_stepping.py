import numpy as np
import pytest
from scipy.optimize import brentq

from mdrelax import core
from mdrelax.core import chain_from_f
from mdrelax.exceptions import EvaluationError, StepFailure, UnsupportedOperation
from mdrelax.problems import dissipated_exponential, get_problem
from mdrelax.stepping import (
    ImplicitSolveConfig,
    NewtonCache,
    StepRecord,
    continuous_output,
    hermite_interpolant,
    hermite_quintic,
    step,
)
from mdrelax.tableaux import registry_get


def _decay(m=4):
    return chain_from_f(lambda u: -u, m)


def test_ct42_linear_decay_single_step():
    rec = step(_decay(), registry_get("CT(4,2)"), 0.0, np.array([1.0]), 0.1)
    assert rec.u1[0] == pytest.approx(0.9048375, abs=5e-8)
    assert rec.t1 == pytest.approx(0.1)


def test_zero_step_is_identity():
    u = np.array([0.3, -0.2])
    for name in ("CT(5,3)", "HB-I2DRK4-2s"):
        rec = step(_decay(), registry_get(name), 1.0, u, 0.0)
        np.testing.assert_array_equal(rec.u1, u)


def test_ct32_matches_hand_written_step():
    prob = get_problem("oscillator")
    f = prob.chain.f
    g = lambda u: prob.chain.g(2, u)
    u, h = np.array([0.6, 0.8]), 0.3
    y2 = u + h * f(u) + h**2 / 2 * g(u)
    ref = u + h * (2 / 3 * f(u) + 1 / 3 * f(y2)) + h**2 / 6 * g(u)
    rec = step(prob.chain, registry_get("CT(3,2)"), 0.0, u, h)
    np.testing.assert_allclose(rec.u1, ref, rtol=1e-14, atol=1e-15)


def test_hb3_linear_step_ratio():
    rec = step(_decay(), registry_get("HB-I2DRK3-2s"), 0.0, np.array([1.0]), 0.5)
    assert rec.u1[0] == pytest.approx(20 / 33, rel=1e-12)


def test_hb4_dissipated_exponential_against_scalar_root():
    prob = dissipated_exponential()
    u, h = 0.5, 0.2
    f = lambda y: -np.exp(y)
    g = lambda y: np.exp(2 * y)

    def residual(y):
        return y - u - h / 2 * (f(u) + f(y)) - h**2 / 12 * (g(u) - g(y))

    y = brentq(residual, u - 1.0, u, xtol=1e-15)
    tight = ImplicitSolveConfig(newton_abs_tol=1e-15, newton_rel_tol=1e-15)
    rec = step(prob.chain, registry_get("HB-I2DRK4-2s"), 0.0, np.array([u]), h, tight)
    assert rec.u1[0] == pytest.approx(y, abs=1e-14)
    assert rec.newton_iterations > 0


def test_gmres_and_dense_agree():
    prob = get_problem("bbm", N=32)
    tab = registry_get("HB-I2DRK4-2s")
    dense = step(prob.chain, tab, 0.0, prob.u0, 0.5, ImplicitSolveConfig(jacobian_strategy="dense-fd"))
    krylov = step(prob.chain, tab, 0.0, prob.u0, 0.5,
                  ImplicitSolveConfig(jacobian_strategy="matrix-free-gmres"))
    np.testing.assert_allclose(krylov.u1, dense.u1, atol=1e-10)


def test_cache_is_reused_between_steps():
    prob = get_problem("oscillator")
    tab = registry_get("HB-I2DRK6-3s")
    cache = NewtonCache()
    rec = step(prob.chain, tab, 0.0, prob.u0, 0.1, cache=cache)
    step(prob.chain, tab, rec.t1, rec.u1, 0.1, cache=cache, start_derivs=rec.end_derivs)
    assert cache.lu is not None
    assert cache.refreshes >= 1


def test_chain_too_short():
    with pytest.raises(ValueError):
        step(chain_from_f(lambda u: -u, 2), registry_get("TO(5,2)"), 0.0, np.ones(1), 0.1)


@pytest.mark.parametrize("kw", [dict(newton_abs_tol=0.0), dict(max_newton_iters=0),
                                dict(jacobian_strategy="lu")])
def test_solver_config_validation(kw):
    with pytest.raises(ValueError):
        ImplicitSolveConfig(**kw)


def _polynomial_record(degree, nderiv, t0=0.3, dt=0.7):
    coef = np.arange(1.0, degree + 2.0)[::-1] / 3.0
    p = np.poly1d(coef)
    derivs = lambda t: [np.array([p.deriv(k)(t)]) for k in range(1, nderiv + 1)]
    rec = StepRecord(t0, dt, np.array([p(t0)]), np.array([p(t0 + dt)]), np.zeros((1, 1)),
                     np.zeros((1, 1, 1)), derivs(t0), derivs(t0 + dt), registry_get("CT(3,2)"),
                     chain=_decay())
    return rec, p


@pytest.mark.parametrize("degree,nderiv", [(5, 2), (7, 3), (3, 1)])
def test_hermite_reproduces_polynomials(degree, nderiv):
    rec, p = _polynomial_record(degree, nderiv)
    for theta in np.linspace(0.0, 1.0, 9):
        tau = rec.t + theta * rec.dt
        assert hermite_interpolant(rec, tau, nderiv)[0] == pytest.approx(p(tau), rel=1e-12)


def test_hermite_guards():
    rec, _ = _polynomial_record(5, 2)
    assert hermite_quintic(rec, rec.t1)[0] == pytest.approx(rec.u1[0])
    with pytest.raises(UnsupportedOperation):
        hermite_interpolant(rec, rec.t, 3)
    with pytest.raises(ValueError):
        hermite_interpolant(rec, rec.t1 + 1.0)


def test_continuous_output_endpoints():
    prob = get_problem("oscillator")
    tab = registry_get("HB-I2DRK4-2s")
    rec = step(prob.chain, tab, 0.0, prob.u0, 0.2)
    np.testing.assert_allclose(continuous_output(rec, tab, 0.0), rec.u0, atol=0)
    np.testing.assert_allclose(continuous_output(rec, tab, 1.0), rec.u1, atol=1e-15)
    with pytest.raises(UnsupportedOperation):
        continuous_output(rec, registry_get("CT(3,2)"), 0.5)


def test_continuous_output_midpoint_accuracy():
    # local error of the dense output at theta = 1/2 is O(dt^5)
    prob = get_problem("oscillator")
    tab = registry_get("HB-I2DRK4-2s")
    errs = []
    hs = [0.4, 0.2, 0.1]
    for h in hs:
        rec = step(prob.chain, tab, 0.0, prob.u0, h)
        errs.append(np.linalg.norm(continuous_output(rec, tab, 0.5) - prob.exact(h / 2)))
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert slope == pytest.approx(5.0, abs=0.2)


def test_nonfinite_update_is_reported():
    ch = chain_from_f(lambda u: core.exp(1e3 * u), 2)
    with np.errstate(over="ignore"), pytest.raises((StepFailure, EvaluationError)):
        step(ch, registry_get("CT(3,2)"), 0.0, np.ones(1), 0.1)
