from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lppdwg.poly import (EdgeBasis, TriBasis, edge_quadrature, map_to_triangles, tri_dim,
                         tri_quadrature)


def ref_monomial(a, b):
    # closed form of the integral of x^a y^b over the reference triangle
    return factorial(a) * factorial(b) / factorial(a + b + 2)


def test_tri_rule_values():
    r = tri_quadrature(2)
    assert abs(r.weights.sum() - 0.5) < 1e-15
    x, y = r.points.T
    assert abs(r.weights @ x - 1 / 6) < 1e-15
    r3 = tri_quadrature(3)
    x, y = r3.points.T
    assert abs(r3.weights @ (x ** 2 * y) - 1 / 60) < 1e-15


@pytest.mark.parametrize("deg", [1, 2, 4, 6, 8, 10])
def test_tri_rule_exactness(deg):
    r = tri_quadrature(deg)
    assert r.degree >= deg and np.all(r.weights > 0)
    x, y = r.points.T
    for a in range(deg + 1):
        for b in range(deg + 1 - a):
            assert abs(r.weights @ (x ** a * y ** b) - ref_monomial(a, b)) < 1e-13


def test_tri_rule_limits():
    with pytest.raises(ValueError):
        tri_quadrature(0)
    with pytest.raises(ValueError):
        tri_quadrature(40)


def test_edge_rule():
    assert abs(edge_quadrature(1).weights.sum() - 1) < 1e-15
    r = edge_quadrature(2)
    s = r.points[:, 0]
    assert abs(r.weights @ s ** 3 - 0.25) < 1e-15
    assert abs(r.weights @ s ** 4 - 0.2) > 1e-3
    with pytest.raises(ValueError):
        edge_quadrature(0)


def test_basis_spans_polynomials(rng):
    verts = np.array([[0.2, 0.1], [0.9, 0.3], [0.4, 0.8]])
    pts = map_to_triangles(verts, tri_quadrature(8).points)
    for d in range(4):
        B = TriBasis(d, verts)
        vals, grads = B.eval(pts)
        assert vals.shape == (len(pts), tri_dim(d))
        assert np.linalg.matrix_rank(vals) == tri_dim(d)
        np.testing.assert_array_equal(grads[:, 0], 0.0)
        # a random polynomial of degree d is reproduced exactly
        x, y = pts.T
        target = sum(rng.standard_normal() * x ** a * y ** (n - a)
                     for n in range(d + 1) for a in range(n + 1))
        coef = np.linalg.lstsq(vals, target, rcond=None)[0]
        assert np.max(np.abs(vals @ coef - target)) < 1e-11


@settings(max_examples=30, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.integers(0, 3))
def test_basis_gradients_match_finite_differences(x, y, d):
    verts = np.array([[-1.0, -1.0], [2.0, -1.0], [0.0, 2.0]])
    B = TriBasis(d, verts)
    p = np.array([[x, y]])
    _, g = B.eval(p)
    step = 1e-6
    for c in range(2):
        e = np.zeros(2)
        e[c] = step
        fd = (B.eval(p + e)[0] - B.eval(p - e)[0]) / (2 * step)
        np.testing.assert_allclose(g[0, :, c], fd[0], atol=1e-7)


def test_edge_basis_parameter():
    E = EdgeBasis(2, np.array([[0.0, 0.0], [2.0, 0.0]]))
    s = E.parameter(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]))
    np.testing.assert_allclose(s, [0, 0.5, 1])
    np.testing.assert_allclose(E.eval_param(np.array([1.0])), [[1, 0.5, 0.25]])


def test_degenerate_triangle_rejected():
    with pytest.raises(ValueError):
        TriBasis(1, [[0, 0], [1, 1], [2, 2]])
