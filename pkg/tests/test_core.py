import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mdrelax import core
from mdrelax.core import Dual, EntropyFunctional, chain_from_f, dual_directional, linear
from mdrelax.exceptions import DualDepthError, EvaluationError
from mdrelax.problems import dissipated_exponential, kepler, oscillator

finite = st.floats(-3.0, 3.0, allow_nan=False)


def test_directional_linear_map():
    f = lambda u: core.stack([u[1], -u[0]])
    np.testing.assert_allclose(dual_directional(f, np.array([1.0, 0.0]), np.array([0.0, 1.0])), [1.0, 0.0])


def test_directional_square():
    assert dual_directional(lambda u: u * u, np.array([3.0]), np.array([1.0]))[0] == pytest.approx(6.0)


def test_oscillator_second_derivative_by_hand():
    prob = oscillator(0.0)
    np.testing.assert_allclose(prob.chain.g(2, np.array([1.0, 0.0])), [-1.0, 0.0], atol=1e-15)


def test_linear_chain_powers():
    lam = -0.7
    ch = chain_from_f(lambda u: lam * u, 3)
    u = np.array([0.3, -1.2])
    for k in range(1, 4):
        np.testing.assert_allclose(ch.g(k, u), lam**k * u, rtol=1e-14)


def test_dissipated_exponential_g2():
    ch = chain_from_f(lambda u: -core.exp(u), 2)
    u = np.array([0.5])
    np.testing.assert_allclose(ch.g(2, u), np.exp(2 * u), rtol=1e-14)
    # the problem's analytic derivatives agree with nested duals
    prob = dissipated_exponential()
    for k in range(1, 4):
        nested = chain_from_f(prob.chain.f, 4)
        np.testing.assert_allclose(prob.chain.g(k, u), nested.g(k, u), rtol=1e-13)


def test_kepler_g2_central_difference():
    prob = kepler()
    f, u = prob.chain.f, prob.u0
    h = 1e-6
    fd = (f(u + h * f(u)) - f(u - h * f(u))) / (2 * h)
    g2 = prob.chain.g(2, u)
    assert np.linalg.norm(g2 - fd) <= 1e-6 * np.linalg.norm(g2)


@pytest.mark.parametrize("eps", [0.0, 1e-2])
def test_oscillator_analytic_chain_matches_nested_duals(eps):
    prob = oscillator(eps)
    nested = chain_from_f(prob.chain.f, 3)
    u = np.array([0.8, -0.4])
    for k in (2, 3):
        np.testing.assert_allclose(prob.chain.g(k, u), nested.g(k, u), rtol=1e-13, atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(finite, finite, finite)
def test_dual_product_and_quotient_rules(a, b, c):
    x = np.array([a])
    v = np.array([1.0])
    f = lambda u: (u * u + c) / (1.0 + u * u) + core.sin(u) * core.exp(0.3 * u)
    d = dual_directional(f, x, v)[0]
    exact = (2 * a * (1 + a * a) - (a * a + c) * 2 * a) / (1 + a * a) ** 2 + (
        np.cos(a) * np.exp(0.3 * a) + 0.3 * np.sin(a) * np.exp(0.3 * a))
    assert d == pytest.approx(exact, rel=1e-12, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 3.0), finite)
def test_nested_duals_give_second_derivative(a, b):
    # d^2/dx^2 of x^3 + b x at a, via nesting
    f = lambda u: u * u * u + b * u
    g = lambda u: dual_directional(f, u, np.ones_like(core.primal(u)))
    second = dual_directional(g, np.array([a]), np.array([1.0]))[0]
    assert second == pytest.approx(6 * a, rel=1e-12)


def test_depth_limit():
    x = 1.0
    for i in range(core.MAX_DUAL_DEPTH):
        x = Dual(x, 1.0, 100 + i)
    with pytest.raises(DualDepthError):
        Dual(x, 1.0, 999)


def test_linear_applies_to_tangents():
    op = lambda v: np.roll(v, 1) - v
    u, v = np.arange(4.0), np.ones(4)
    out = dual_directional(lambda w: linear(op, w * w), u, v)
    np.testing.assert_allclose(out, op(2 * u * v))


def test_nonfinite_evaluation_reports_index():
    ch = chain_from_f(lambda u: np.array([u[0], np.nan]), 1)
    with pytest.raises(EvaluationError) as exc:
        ch.evaluate(np.array([1.0, 0.0]), 1)
    assert exc.value.index == 1


def test_as_state_rejects_bad_input():
    with pytest.raises(EvaluationError):
        core.as_state([1.0, np.nan])
    with pytest.raises(ValueError):
        core.as_state([])


def test_chain_bounds():
    with pytest.raises(ValueError):
        chain_from_f(lambda u: u, 5)
    ch = chain_from_f(lambda u: u, 2)
    with pytest.raises(ValueError):
        ch.g(3, np.ones(1))


def test_entropy_derivative_from_duals_matches_supplied():
    e_auto = EntropyFunctional(lambda u: core.dsum(core.exp(u)))
    u, v = np.array([0.1, -0.3]), np.array([1.0, 2.0])
    assert e_auto.derivative(u, v) == pytest.approx(float(np.exp(u) @ v), rel=1e-14)
    q = EntropyFunctional.quadratic()
    assert q(u) == pytest.approx(u @ u)
    assert q.derivative(u, v) == pytest.approx(2 * u @ v)
    with pytest.raises(ValueError):
        EntropyFunctional(lambda u: 0.0, kind="bogus")
