import numpy as np
import pytest
from scipy.optimize import brentq

from mdrelax import core
from mdrelax.core import EntropyFunctional
from mdrelax.exceptions import DegenerateDirection, UnsupportedOperation
from mdrelax.integrate import integrate
from mdrelax.problems import dissipated_exponential, get_problem
from mdrelax.relaxation import (
    RelaxationConfig,
    eta_new_estimate,
    gamma_general,
    gamma_quadratic,
    gll_rule,
    relax_step,
)
from mdrelax.stepping import step
from mdrelax.tableaux import registry_get


@pytest.mark.parametrize("n", range(2, 9))
def test_gll_exactness(n):
    x, w = gll_rule(n)
    assert x[0] == 0.0 and x[-1] == 1.0
    assert np.all(w > 0)
    # exact for polynomials of degree 2n - 3
    for k in range(2 * n - 2):
        assert w @ x**k == pytest.approx(1.0 / (k + 1), rel=1e-13)


def test_gll_known_nodes():
    x, w = gll_rule(4)
    np.testing.assert_allclose(x, [0, (1 - 1 / np.sqrt(5)) / 2, (1 + 1 / np.sqrt(5)) / 2, 1], atol=1e-15)
    np.testing.assert_allclose(w, [1 / 12, 5 / 12, 5 / 12, 1 / 12], atol=1e-15)
    with pytest.raises(ValueError):
        gll_rule(9)


def test_gamma_quadratic_norm_preserving_step():
    q = EntropyFunctional.quadratic()
    h = 0.3
    g = gamma_quadratic(np.array([1.0, 0.0]), np.array([np.cos(h), np.sin(h)]), q)
    assert g == pytest.approx(1.0, abs=1e-14)


def test_gamma_quadratic_outward_step():
    q = EntropyFunctional.quadratic()
    assert gamma_quadratic(np.array([1.0, 0.0]), np.array([1.1, 0.0]), q) == pytest.approx(-20.0)
    with pytest.raises(DegenerateDirection):
        gamma_quadratic(np.ones(2), np.ones(2), q)
    with pytest.raises(ValueError):
        gamma_quadratic(np.ones(1), np.zeros(1), EntropyFunctional(lambda u: u[0]))


def test_general_solver_matches_closed_form():
    rng = np.random.default_rng(3)
    q = EntropyFunctional.quadratic()
    for _ in range(20):
        u0 = rng.normal(size=4)
        u1 = u0 + 0.05 * rng.normal(size=4)
        eta_new = q(u0) - 1e-3 * abs(rng.normal())
        g_closed = gamma_quadratic(u0, u1, q, eta_new)
        if not 0.5 < g_closed < 1.5:
            continue
        assert gamma_general(u0, u1, q, eta_new) == pytest.approx(g_closed, rel=1e-12)


@pytest.mark.parametrize("solver", ["scalar-newton", "bisection"])
def test_exponential_entropy_two_point_estimate(solver):
    prob = dissipated_exponential()
    rec = step(prob.chain, registry_get("CT(4,2)"), 0.0, prob.u0, 0.2)
    cfg = RelaxationConfig(quadrature_points=2, gamma_solver=solver, estimator="hermite-quadrature")
    eta = lambda u: np.exp(u[0])
    expected_new = eta(rec.u0) + 0.1 * (-np.exp(2 * rec.u0[0]) - np.exp(2 * rec.u1[0]))
    assert eta_new_estimate(rec, prob.entropy, cfg) == pytest.approx(expected_new, rel=1e-14)
    d = rec.u1 - rec.u0
    oracle = brentq(lambda g: eta(rec.u0 + g * d) - eta(rec.u0) - g * (expected_new - eta(rec.u0)),
                    0.5, 1.5, xtol=1e-15)
    out = relax_step(rec, prob.entropy, cfg)
    # bisection stops on the residual, Newton is polished to round-off
    assert abs(out.residual) <= cfg.root_tol * (1 + eta(rec.u0))
    assert out.gamma == pytest.approx(oracle, abs=1e-12 if solver == "scalar-newton" else 1e-10)
    assert out.t == pytest.approx(0.2 * out.gamma)


def test_relaxed_kepler_conserves_energy():
    prob = get_problem("kepler", momentum="standard")
    traj = integrate(prob, registry_get("CT(4,2)"), 0.05, 10.0,
                     RelaxationConfig(estimator="conserved"))
    assert np.max(np.abs(traj.eta - traj.eta[0])) <= 1e-12
    assert traj.t_final == pytest.approx(10.0, abs=1e-9)


def test_modes():
    prob = get_problem("oscillator")
    rec = step(prob.chain, registry_get("CT(3,2)"), 0.0, prob.u0, 0.3)
    off = relax_step(rec, prob.entropy, RelaxationConfig(mode="off"))
    assert off.gamma == 1.0 and off.t == pytest.approx(0.3)
    np.testing.assert_array_equal(off.u, rec.u1)
    idt = relax_step(rec, prob.entropy, RelaxationConfig(mode="IDT"))
    rel = relax_step(rec, prob.entropy, RelaxationConfig())
    assert idt.gamma == rel.gamma != 1.0
    assert idt.t == pytest.approx(0.3)
    assert rel.t == pytest.approx(0.3 * rel.gamma)
    assert prob.entropy(rel.u) == pytest.approx(prob.entropy(prob.u0), abs=1e-14)


def test_gamma_cap_is_applied():
    prob = get_problem("oscillator")
    rec = step(prob.chain, registry_get("CT(3,2)"), 0.0, prob.u0, 0.3)
    free = relax_step(rec, prob.entropy)
    assert free.gamma > 1.0
    capped = relax_step(rec, prob.entropy, RelaxationConfig(gamma_cap=1.0))
    assert capped.clamped and capped.gamma == 1.0


def test_degenerate_direction_keeps_baseline():
    prob = get_problem("oscillator")
    rec = step(core.chain_from_f(lambda u: 0.0 * u, 2), registry_get("CT(3,2)"), 0.0, prob.u0, 0.1)
    out = relax_step(rec, prob.entropy)
    assert out.degenerate and out.gamma == 1.0


def test_estimator_guards():
    prob = dissipated_exponential()
    rec = step(prob.chain, registry_get("CT(3,2)"), 0.0, prob.u0, 0.1)
    with pytest.raises(UnsupportedOperation):
        eta_new_estimate(rec, prob.entropy, RelaxationConfig(estimator="continuous-output-quadrature"))
    # a sixth-order scheme needs g^(3) at the step ends for the septic interpolant
    short = core.chain_from_f(prob.chain.f, 2)
    rec = step(short, registry_get("HB-I2DRK6-3s"), 0.0, prob.u0, 0.1)
    with pytest.raises(UnsupportedOperation):
        eta_new_estimate(rec, prob.entropy, RelaxationConfig(estimator="hermite-quadrature"))


@pytest.mark.parametrize("kw", [dict(mode="bogus"), dict(gamma_solver="x"), dict(estimator="x"),
                                dict(root_tol=0.0), dict(quadrature_points=1),
                                dict(gamma_bracket=(1.2, 1.1))])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        RelaxationConfig(**kw)
