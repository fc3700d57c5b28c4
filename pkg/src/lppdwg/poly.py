"""Scaled monomial bases on triangles and edges, and quadrature rules.

Triangle basis functions are ``((x - xc) / h) ** a * ((y - yc) / h) ** b`` with
``a + b <= d``, centred at the centroid and scaled by the triangle diameter.
Edge basis functions are ``(s - 1/2) ** m`` with ``s`` in [0, 1] the arclength
parameter from the first (lower-index) vertex of the global edge.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from skfem.quadrature import get_quadrature_tri

MAX_TRI_EXACTNESS = 19
MAX_EDGE_POINTS = 30


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray   # (nq, dim) reference coordinates
    weights: np.ndarray  # (nq,)
    degree: int


@lru_cache(maxsize=None)
def tri_quadrature(exactness: int) -> QuadRule:
    """Symmetric positive-weight rule on the triangle (0,0), (1,0), (0,1).

    Returns the cheapest tabulated rule whose exactness is at least the request.
    """
    if exactness < 1:
        raise ValueError("exactness must be >= 1")
    if exactness > MAX_TRI_EXACTNESS:
        raise ValueError(f"no tabulated triangle rule of exactness {exactness}")
    for order in range(max(exactness, 2), MAX_TRI_EXACTNESS + 1):
        X, W = get_quadrature_tri(order)
        if np.all(W > 0):
            pts = np.ascontiguousarray(X.T)
            pts.setflags(write=False)
            W = np.ascontiguousarray(W)
            W.setflags(write=False)
            return QuadRule(pts, W, order)
    raise ValueError(f"no positive-weight triangle rule of exactness {exactness}")


@lru_cache(maxsize=None)
def edge_quadrature(points: int) -> QuadRule:
    """Gauss-Legendre rule on [0, 1], exact to degree 2 * points - 1."""
    if not 1 <= points <= MAX_EDGE_POINTS:
        raise ValueError(f"edge rule with {points} points is not available")
    x, w = np.polynomial.legendre.leggauss(points)
    pts = (0.5 * (x + 1.0))[:, None]
    w = 0.5 * w
    pts.setflags(write=False)
    w.setflags(write=False)
    return QuadRule(pts, w, 2 * points - 1)


def tri_dim(d: int) -> int:
    return (d + 1) * (d + 2) // 2 if d >= 0 else 0


@lru_cache(maxsize=None)
def monomial_exponents(d: int) -> np.ndarray:
    """Exponent pairs (a, b) with a + b <= d, graded by total degree."""
    ex = [(n - b, b) for n in range(d + 1) for b in range(n + 1)]
    return np.array(ex, dtype=np.int64).reshape(-1, 2)


def map_to_triangles(vertices: np.ndarray, ref_points: np.ndarray) -> np.ndarray:
    """Affine image of reference points. vertices (..., 3, 2) -> (..., nq, 2)."""
    v0 = vertices[..., 0:1, :]
    e1 = vertices[..., 1:2, :] - v0
    e2 = vertices[..., 2:3, :] - v0
    xi = ref_points[:, 0:1]
    eta = ref_points[:, 1:2]
    return v0 + xi * e1 + eta * e2


def triangle_areas(vertices: np.ndarray) -> np.ndarray:
    v = vertices
    return 0.5 * ((v[..., 1, 0] - v[..., 0, 0]) * (v[..., 2, 1] - v[..., 0, 1])
                  - (v[..., 2, 0] - v[..., 0, 0]) * (v[..., 1, 1] - v[..., 0, 1]))


class TriBasis:
    """P_d on one triangle (vertices (3, 2)) or a batch (vertices (nT, 3, 2))."""

    def __init__(self, degree: int, vertices):
        if degree < 0:
            raise ValueError("degree must be >= 0")
        v = np.asarray(vertices, dtype=float)
        area = triangle_areas(v)
        edge = np.linalg.norm(v[..., [1, 2, 0], :] - v, axis=-1)
        scale = edge.max(axis=-1)
        if np.any(np.abs(area) <= 1e-14 * scale ** 2):
            raise ValueError("degenerate triangle")
        self.degree = degree
        self.vertices = v
        self.center = v.mean(axis=-2)
        self.scale = scale
        self.exponents = monomial_exponents(degree)

    @property
    def count(self) -> int:
        return tri_dim(self.degree)

    def eval(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Values (..., nq, nb) and physical gradients (..., nq, nb, 2).

        ``points`` has shape (..., nq, 2) with leading dims matching the batch.
        """
        pts = np.asarray(points, dtype=float)
        s = np.asarray(self.scale)[..., None, None]
        X = (pts - self.center[..., None, :]) / s
        a, b = self.exponents[:, 0], self.exponents[:, 1]
        x = X[..., 0:1]
        y = X[..., 1:2]
        xa = x ** a
        yb = y ** b
        values = xa * yb
        dxa = np.where(a > 0, a * x ** np.maximum(a - 1, 0), 0.0)
        dyb = np.where(b > 0, b * y ** np.maximum(b - 1, 0), 0.0)
        grads = np.stack([dxa * yb, xa * dyb], axis=-1) / s[..., None]
        return values, grads


class EdgeBasis:
    """P_d on one edge (endpoints (2, 2)) or a batch (endpoints (nE, 2, 2))."""

    def __init__(self, degree: int, endpoints):
        if degree < 0:
            raise ValueError("degree must be >= 0")
        self.degree = degree
        self.endpoints = np.asarray(endpoints, dtype=float)

    @property
    def count(self) -> int:
        return self.degree + 1

    def parameter(self, points) -> np.ndarray:
        a = self.endpoints[..., 0, :][..., None, :]
        t = (self.endpoints[..., 1, :] - self.endpoints[..., 0, :])[..., None, :]
        return np.einsum("...i,...i->...", np.asarray(points) - a, t) / np.einsum("...i,...i->...", t, t)

    def eval_param(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)[..., None] - 0.5
        return s ** np.arange(self.degree + 1)

    def eval(self, points) -> np.ndarray:
        return self.eval_param(self.parameter(points))


def eval_basis(basis, points):
    """Values and (for triangle bases) gradients of ``basis`` at ``points``."""
    if isinstance(basis, TriBasis):
        return basis.eval(points)
    return basis.eval(points), None
