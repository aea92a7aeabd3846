from fractions import Fraction as F

import numpy as np
import pytest

from mdrelax.exceptions import UnsupportedOperation
from mdrelax.tableaux import (
    MdrkTableau,
    available,
    continuous_weights,
    exact_coefficients,
    generate_hb,
    mp_coefficients,
    registry_get,
    tableau_from_json,
    tableau_to_json,
)


def test_ct42_entries():
    ex = exact_coefficients("CT(4,2)")
    assert ex["b"] == [[1, 0], [F(1, 6), F(1, 3)]]
    assert ex["c"] == [0, F(1, 2)]
    assert ex["A"][0][1][0] == F(1, 2)
    assert ex["A"][1][1][0] == F(1, 8)


def test_ssp3_entries():
    ex = exact_coefficients("SSP-I2DRK3-2s")
    assert ex["b"] == [[0, 1], [F(-1, 6), F(-1, 3)]]
    assert ex["A"][1][0] == [F(-1, 6), 0]


def test_hb6_entries():
    ex = exact_coefficients("HB-I2DRK6-3s")
    assert ex["A"][0][1] == [F(101, 480), F(8, 30), F(55, 2400)]
    assert ex["b"][0] == [F(7, 30), F(16, 30), F(7, 30)]
    assert ex["A"][1][1] == [F(65, 4800), F(-25, 600), F(-25, 8000)]


def test_generate_trapezoidal_rule():
    tab = generate_hb(1, 2, [F(0), F(1)], (1, 1))
    assert tab.exact["b"] == [[F(1, 2), F(1, 2)]]
    assert tab.order == 2


def test_generate_hb3_matches_registry():
    gen = generate_hb(2, 2, [F(0), F(1)], (1, 2))
    ref = exact_coefficients("HB-I2DRK3-2s")
    assert gen.exact["A"] == ref["A"] and gen.exact["b"] == ref["b"]
    assert gen.order == 3


def test_generate_float_nodes():
    tab = generate_hb(2, 3, [0.0, 0.5, 1.0])
    ref = registry_get("HB-I2DRK6-3s")
    assert tab.exact is None
    np.testing.assert_allclose(tab.A, ref.A, atol=1e-13)


@pytest.mark.parametrize("kw", [dict(c=[F(0), F(0), F(1)]), dict(c=[F(0), F(2)]),
                                dict(c=[F(0), F(1)], multiplicities=(3, 1))])
def test_generate_rejects_bad_nodes(kw):
    with pytest.raises(ValueError):
        generate_hb(2, **kw)


def test_continuous_weights_hb4():
    tab = registry_get("HB-I2DRK4-2s")
    np.testing.assert_allclose(continuous_weights(tab, 1.0), [[0.5, 0.5], [1 / 12, -1 / 12]], atol=1e-15)
    np.testing.assert_allclose(continuous_weights(tab, 0.0), 0.0, atol=0)
    np.testing.assert_allclose(continuous_weights(tab, 0.5)[0], [13 / 32, 3 / 32], atol=1e-15)
    with pytest.raises(ValueError):
        continuous_weights(tab, 1.5)


@pytest.mark.parametrize("name", [n for n in available()])
def test_registry_consistency(name):
    tab = registry_get(name)
    np.testing.assert_allclose(tab.A[0].sum(axis=1), tab.c, atol=1e-14)
    # first-order condition: sum b^(1) = 1; second: sum b^(1) c + sum b^(2) = 1/2
    assert tab.b[0].sum() == pytest.approx(1.0, abs=1e-14)
    if tab.order >= 2:
        second = tab.b[0] @ tab.c + (tab.b[1].sum() if tab.m > 1 else 0.0)
        assert second == pytest.approx(0.5, abs=1e-14)


@pytest.mark.parametrize("name", ["CT(3,2)", "TO(7,3)", "HB-I2DRK6-3s"])
def test_order_via_linear_problem(name):
    # one step of u' = u must agree with exp(dt) to O(dt^(p+1))
    from mdrelax.stability import stability_function
    tab = registry_get(name)
    hs = [0.4, 0.2]  # large enough that round-off stays below the local error
    errs = [abs(stability_function(tab, h) - np.exp(h)) for h in hs]
    assert np.log(errs[0] / errs[1]) / np.log(2) == pytest.approx(tab.order + 1, abs=0.4)


def test_unbundled_scheme():
    with pytest.raises(UnsupportedOperation):
        registry_get("SSP-I2DRK4-5s")
    with pytest.raises(KeyError):
        registry_get("nope")


def test_json_roundtrip_and_register():
    tab = registry_get("TO(5,2)")
    text = tableau_to_json(tab)
    back = tableau_from_json(text.replace('"TO(5,2)"', '"TO-copy"'), register_it=True)
    np.testing.assert_array_equal(back.A, tab.A)
    assert registry_get("TO-copy") is back


def test_tableau_validation():
    with pytest.raises(ValueError):
        MdrkTableau("bad", A=np.zeros((1, 2, 2)), b=np.zeros((1, 2)), c=[0.0, 1.0], order=1)
    with pytest.raises(ValueError):
        MdrkTableau("bad", A=np.zeros((1, 2, 3)), b=np.zeros((1, 2)), c=[0.0, 0.0], order=1)


def test_mp_coefficients_precision():
    mp = mp_coefficients("TO(7,3)", dps=40)
    tab = registry_get("TO(7,3)")
    np.testing.assert_allclose(np.array(mp["b"], dtype=float), tab.b, rtol=1e-15, atol=1e-16)
