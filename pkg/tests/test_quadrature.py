from fractions import Fraction
from math import factorial

import numpy as np
import pytest

from phdg.quadrature import MAX_DEGREE, edge_rule, integrate_triangle, triangle_rule


def monomial_integral(a, b):
    return Fraction(factorial(a) * factorial(b), factorial(a + b + 2))


def test_triangle_area():
    assert triangle_rule(0).weights.sum() == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("deg", [1, 4, 8])
def test_triangle_linear_and_bilinear(deg):
    rule = triangle_rule(deg)
    assert integrate_triangle(lambda x, y: x, rule) == pytest.approx(1 / 6, rel=1e-14)
    if deg >= 2:
        assert integrate_triangle(lambda x, y: x * y, rule) == pytest.approx(1 / 24, rel=1e-14)


@pytest.mark.parametrize("deg", range(0, MAX_DEGREE + 1))
def test_triangle_monomial_sweep(deg):
    rule = triangle_rule(deg)
    x, y = rule.points.T
    for a in range(deg + 1):
        for b in range(deg + 1 - a):
            exact = float(monomial_integral(a, b))
            got = np.dot(rule.weights, x ** a * y ** b)
            assert abs(got - exact) <= 1e-14 * exact, (a, b)


def test_triangle_rule_is_symmetric():
    rule = triangle_rule(7)
    assert np.all(rule.weights > 0)
    P = rule.points

    def maps_onto_itself(Q):
        dist = np.linalg.norm(Q[:, None, :] - P[None, :, :], axis=-1)
        j = dist.argmin(axis=1)
        return dist.min(axis=1).max() < 1e-13 and np.allclose(rule.weights[j], rule.weights, rtol=1e-13)

    assert maps_onto_itself(P[:, ::-1])
    assert maps_onto_itself(np.stack([P[:, 1], 1 - P[:, 0] - P[:, 1]], axis=1))


def test_edge_rule_basics():
    assert edge_rule(0).weights.sum() == pytest.approx(1.0, abs=1e-15)
    r = edge_rule(3)
    assert np.dot(r.weights, r.points ** 3) == pytest.approx(0.25, rel=1e-15)


@pytest.mark.parametrize("npts", range(1, 11))
def test_gauss_exact_to_2n_minus_1(npts):
    r = edge_rule(2 * npts - 1)
    assert len(r) == npts
    for k in range(2 * npts):
        assert abs(np.dot(r.weights, r.points ** k) - 1 / (k + 1)) <= 1e-14 / (k + 1)
    # and not beyond
    k = 2 * npts
    assert abs(np.dot(r.weights, r.points ** k) - 1 / (k + 1)) > 1e-12


def test_edge_rule_mirror_symmetric():
    r = edge_rule(9)
    np.testing.assert_allclose(r.points, 1.0 - r.points[::-1], rtol=0, atol=1e-16)
    np.testing.assert_array_equal(r.weights, r.weights[::-1])


@pytest.mark.parametrize("bad", [-1, MAX_DEGREE + 1, 2.5])
def test_unsupported_degree(bad):
    with pytest.raises(ValueError):
        triangle_rule(bad)
    with pytest.raises(ValueError):
        edge_rule(bad)
