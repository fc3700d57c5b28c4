import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lppdwg.analysis import commutation_defect
from lppdwg.mesh import Mesh, build_structured_square, classify_boundary
from lppdwg.space import (Discretization, PrimalField, WeakField, WeakSpace, project_Mh,
                          project_Qh, weak_gradient, weak_gradient_local)

FUNCS = {
    "x": (lambda x, y: x, lambda x, y: (np.ones_like(x), 0 * x)),
    "y": (lambda x, y: y, lambda x, y: (0 * x, np.ones_like(x))),
    "x2": (lambda x, y: x ** 2, lambda x, y: (2 * x, 0 * x)),
    "xy": (lambda x, y: x * y, lambda x, y: (y, x)),
    "sincos": (lambda x, y: np.sin(x) * np.cos(y),
               lambda x, y: (np.cos(x) * np.cos(y), -np.sin(x) * np.sin(y))),
}


def commutator_norm(disc, w, grad):
    return float(np.sqrt(np.sum(commutation_defect(disc, w, grad) ** 2)))


def test_reference_triangle_weak_gradient():
    mesh = Mesh.from_triangles([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    # sigma_0 = 0 and sigma_b = 1 on the hypotenuse only (local edge 1)
    g = weak_gradient_local(mesh, 0, [0.0], [[0.0], [1.0], [0.0]], r=0)
    np.testing.assert_allclose(g[:, 0], [2.0, 2.0], atol=1e-14)


def test_weak_gradient_of_constant_is_zero():
    mesh = build_structured_square(2)
    g = weak_gradient_local(mesh, 3, [1.0, 0.0, 0.0], np.ones((3, 2)) * [1.0, 0.0], r=1)
    np.testing.assert_allclose(g, 0.0, atol=1e-11)


@pytest.mark.parametrize("k,j", [(1, 0), (1, 1), (2, 1), (2, 2)])
@pytest.mark.parametrize("name", list(FUNCS))
def test_commutativity(k, j, name, square8):
    disc = Discretization(square8, k, j)
    w, grad = FUNCS[name]
    assert commutator_norm(disc, w, grad) < 1e-10


@settings(max_examples=15, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=6, max_size=6), st.sampled_from([(1, 0), (2, 1), (2, 2)]))
def test_commutativity_random_quadratics(c, kj):
    mesh = build_structured_square(3)
    disc = Discretization(mesh, *kj)

    def w(x, y):
        return c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y

    def grad(x, y):
        return (c[1] + 2 * c[3] * x + c[4] * y, c[2] + c[4] * x + 2 * c[5] * y)
    assert commutator_norm(disc, w, grad) < 1e-10 * (1 + max(map(abs, c)))


def test_weak_space_layout():
    mesh = classify_boundary(build_structured_square(2), np.array([1.0, 1.0]))
    W = WeakSpace(mesh, 1)
    n_out = np.sum(mesh.edge_tags == 2)
    assert W.ndofs == mesh.n_triangles * 3 + 2 * (mesh.n_edges - n_out)
    assert np.all((W.local_dofs >= 0).sum(axis=1) >= 3)
    x = np.arange(W.ndofs, dtype=float)
    np.testing.assert_array_equal(W.pack(W.interior_block(x), W.edge_block(x)), x)


def test_projection_reproduces_polynomials(square8):
    disc = Discretization(square8, 2, 1)
    w = lambda x, y: 1 + 2 * x - y  # noqa: E731
    u = project_Mh(disc, w)
    np.testing.assert_allclose(disc.primal_at_quad(u.coeffs), w(disc.xq[..., 0], disc.xq[..., 1]),
                               atol=1e-13)
    s = project_Qh(disc, w)
    np.testing.assert_allclose(disc.lambda0_at_quad(s.coeffs), w(disc.xq[..., 0], disc.xq[..., 1]),
                               atol=1e-13)


def test_field_validation(square8):
    disc = Discretization(square8, 1, 0)
    with pytest.raises(ValueError):
        WeakField(disc.W, np.zeros(3))
    with pytest.raises(ValueError):
        PrimalField(disc.M, np.zeros(3))
    assert weak_gradient(disc, np.zeros(disc.W.ndofs)).shape == (square8.n_triangles, 2, 1)
