import math

import numpy as np
import pytest

from bifbm import hermite as hm
from bifbm.limit_theorems import hermite_orthogonality_mc


def test_monic_values():
    x = np.array([-1.5, 0.0, 0.3, 2.0])
    np.testing.assert_allclose(hm.hermite(0, x), 1.0)
    np.testing.assert_allclose(hm.hermite(1, x), x)
    np.testing.assert_allclose(hm.hermite(2, x), x**2 - 1)
    np.testing.assert_allclose(hm.hermite(3, x), x**3 - 3 * x)
    np.testing.assert_allclose(hm.hermite(4, x), x**4 - 6 * x**2 + 3)
    for k in range(9):
        ref = np.polynomial.hermite_e.hermeval(x, [0] * k + [1])
        np.testing.assert_allclose(hm.hermite(k, x), ref, rtol=1e-13, atol=1e-12)


def test_orthogonality_by_quadrature():
    x, w = hm.gauss_hermite()
    for k in range(9):
        for l in range(9):
            val = w @ (hm.hermite(k, x) * hm.hermite(l, x))
            assert val == pytest.approx(math.factorial(k) if k == l else 0.0, abs=1e-9 * math.factorial(max(k, l)))


def test_cross_moment_formula():
    assert hm.hermite_cross_moment(3, 3, 0.5) == pytest.approx(0.125 * 6)
    assert hm.hermite_cross_moment(2, 3, 0.5) == 0.0
    with pytest.raises(ValueError):
        hm.hermite_cross_moment(1, 1, 1.5)


@pytest.mark.parametrize("r", [0.0, 0.4, -0.7])
def test_cross_moment_monte_carlo(r):
    rows = hermite_orthogonality_mc(r, 200_000, seed=8, k_max=4)
    for row in rows:
        assert abs(row["z"]) < 5, row


def test_coefficients_of_hermite_input_are_exact():
    f = hm.PolyFunction.parse("hermite:0,1,0.5")
    e = hm.hermite_coeffs(f)
    np.testing.assert_allclose(e.coefficients[:3], [0, 1, 0.5], atol=1e-13)
    assert np.all(e.coefficients[3:] == 0)
    assert e.c1 == pytest.approx(1.0)
    assert e.tail_mass == pytest.approx(0.0, abs=1e-12)
    assert e.higher_order_mass == pytest.approx(0.5)


def test_coefficients_of_monomials():
    # x^3 = H_3 + 3 H_1
    e = hm.hermite_coeffs(hm.PolyFunction("poly", (0, 0, 0, 1)))
    np.testing.assert_allclose(e.coefficients[:4], [0, 3, 0, 1], atol=1e-12)
    x = np.linspace(-3, 3, 7)
    np.testing.assert_allclose(e.reconstruct(x), x**3, atol=1e-10)


def test_uncentered_and_rank_two():
    with pytest.raises(ValueError, match="centered"):
        hm.hermite_coeffs(hm.PolyFunction("poly", (0, 0, 1)))
    e = hm.hermite_coeffs(hm.PolyFunction.parse("hermite:0,0,1"))
    assert not e.rank_one
    assert e.notes


def test_parse_errors_and_roundtrip():
    with pytest.raises(ValueError):
        hm.PolyFunction.parse("x+1")
    with pytest.raises(ValueError):
        hm.PolyFunction("poly", tuple(range(10)))
    f = hm.PolyFunction.parse("poly:0,1,0,1")
    assert hm.PolyFunction.parse(str(f)) == f
