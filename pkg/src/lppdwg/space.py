"""Weak and primal finite element spaces, L2 projections and the weak gradient.

Local ordering of a weak function on a triangle is ``[sigma_0 (dim P_j),
sigma_b on local edge 0, 1, 2 (j + 1 each)]``.  Edge coefficients refer to the
global edge orientation, so they are single valued across interior edges.
Outflow edges carry no degrees of freedom.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import EdgeTag, Mesh
from .poly import EdgeBasis, TriBasis, edge_quadrature, map_to_triangles, tri_dim, tri_quadrature


class WeakSpace:
    """W_{j,h} with sigma_b = 0 on the outflow boundary."""

    def __init__(self, mesh: Mesh, j: int):
        if j < 0:
            raise ValueError("j must be >= 0")
        self.mesh = mesh
        self.j = j
        self.n0 = tri_dim(j)
        self.nb = j + 1
        nT = mesh.n_triangles
        self.active_edges = np.flatnonzero(mesh.edge_tags != EdgeTag.OUTFLOW)
        self.edge_offset = np.full(mesh.n_edges, -1, dtype=np.int64)
        self.n_interior_dofs = nT * self.n0
        self.edge_offset[self.active_edges] = (self.n_interior_dofs
                                               + self.nb * np.arange(len(self.active_edges)))
        self.ndofs = self.n_interior_dofs + self.nb * len(self.active_edges)

        interior = np.arange(nT)[:, None] * self.n0 + np.arange(self.n0)
        off = self.edge_offset[mesh.tri_edges]  # (nT, 3)
        edge = np.where(off[..., None] >= 0, off[..., None] + np.arange(self.nb), -1)
        self.local_dofs = np.hstack([interior, edge.reshape(nT, 3 * self.nb)])

    @property
    def nloc(self) -> int:
        return self.n0 + 3 * self.nb

    def interior_block(self, coeffs: np.ndarray) -> np.ndarray:
        return coeffs[: self.n_interior_dofs].reshape(-1, self.n0)

    def edge_block(self, coeffs: np.ndarray) -> np.ndarray:
        """(nE, nb) edge coefficients, zero rows on outflow edges."""
        out = np.zeros((self.mesh.n_edges, self.nb))
        out[self.active_edges] = coeffs[self.n_interior_dofs:].reshape(-1, self.nb)
        return out

    def pack(self, interior: np.ndarray, edge: np.ndarray) -> np.ndarray:
        return np.concatenate([np.asarray(interior).reshape(-1),
                               np.asarray(edge)[self.active_edges].reshape(-1)])

    def local(self, coeffs: np.ndarray) -> np.ndarray:
        """Gather global coefficients into (nT, nloc) local vectors."""
        padded = np.append(coeffs, 0.0)
        return padded[self.local_dofs]


class PrimalSpace:
    """Discontinuous piecewise P_{k-1}."""

    def __init__(self, mesh: Mesh, k: int):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.mesh = mesh
        self.k = k
        self.nk = tri_dim(k - 1)
        self.ndofs = mesh.n_triangles * self.nk
        self.local_dofs = np.arange(self.ndofs).reshape(-1, self.nk)

    def local(self, coeffs: np.ndarray) -> np.ndarray:
        return np.asarray(coeffs).reshape(-1, self.nk)


@dataclass
class WeakField:
    space: WeakSpace
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.ndofs,):
            raise ValueError("coefficient vector does not match the space")

    @property
    def interior(self) -> np.ndarray:
        return self.space.interior_block(self.coeffs)

    @property
    def edge(self) -> np.ndarray:
        return self.space.edge_block(self.coeffs)


@dataclass
class PrimalField:
    space: PrimalSpace
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.ndofs,):
            raise ValueError("coefficient vector does not match the space")

    @property
    def blocks(self) -> np.ndarray:
        return self.space.local(self.coeffs)


def _solve_spd(gram: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Batched dense solve with a pivot check on the Cholesky factor."""
    L = np.linalg.cholesky(gram)
    piv = np.diagonal(L, axis1=-2, axis2=-1) ** 2
    row = np.abs(gram).max(axis=-1)
    if np.any(piv < 1e-13 * row):
        raise np.linalg.LinAlgError("singular local Gram matrix")
    return np.linalg.solve(gram, rhs)


def weak_gradient_matrices(tri_vertices, normals, edge_endpoints, j, r,
                           tri_rule, edge_rule) -> np.ndarray:
    """Matrices G (nT, 2, dim P_r, nloc) mapping local weak-function
    coefficients to the P_r coefficients of each weak-gradient component.

    tri_vertices (nT, 3, 2); normals (nT, 3, 2) outward; edge_endpoints
    (nT, 3, 2, 2) with the global orientation of each local edge.
    """
    tri_vertices = np.asarray(tri_vertices, dtype=float)
    nT = len(tri_vertices)
    basis_j = TriBasis(j, tri_vertices)
    basis_r = TriBasis(r, tri_vertices)
    area = np.abs(0.5 * ((tri_vertices[:, 1, 0] - tri_vertices[:, 0, 0]) * (tri_vertices[:, 2, 1] - tri_vertices[:, 0, 1])
                         - (tri_vertices[:, 2, 0] - tri_vertices[:, 0, 0]) * (tri_vertices[:, 1, 1] - tri_vertices[:, 0, 1])))
    xq = map_to_triangles(tri_vertices, tri_rule.points)
    wq = 2.0 * area[:, None] * tri_rule.weights
    phi_j, _ = basis_j.eval(xq)
    phi_r, dphi_r = basis_r.eval(xq)
    gram = np.einsum("tq,tqa,tqb->tab", wq, phi_r, phi_r)

    s = edge_rule.points[:, 0]
    a = edge_endpoints[:, :, 0, :]
    b = edge_endpoints[:, :, 1, :]
    xe = a[:, :, None, :] + s[None, None, :, None] * (b - a)[:, :, None, :]
    we = np.linalg.norm(b - a, axis=-1)[..., None] * edge_rule.weights
    psi = EdgeBasis(j, None).eval_param(s)  # (neq, nb)
    phi_r_e, _ = basis_r.eval(xe.reshape(nT, -1, 2))
    phi_r_e = phi_r_e.reshape(nT, 3, len(s), -1)

    n0, nb, nr = tri_dim(j), j + 1, tri_dim(r)
    rhs = np.zeros((nT, 2, nr, n0 + 3 * nb))
    rhs[:, :, :, :n0] = -np.einsum("tq,tqa,tqic->tcia", wq, phi_j, dphi_r)
    edge_part = np.einsum("tlq,qm,tlqi,tlc->tcilm", we, psi, phi_r_e, normals)
    rhs[:, :, :, n0:] = edge_part.reshape(nT, 2, nr, 3 * nb)
    return _solve_spd(gram[:, None], rhs)


def weak_gradient_local(mesh: Mesh, t: int, sigma0, sigma_b, r: int,
                        tri_exactness: int | None = None) -> np.ndarray:
    """Discrete weak gradient of one local weak function on triangle ``t``.

    sigma0: P_j coefficients; sigma_b: (3, j + 1) edge coefficients in the
    global orientation of the triangle's local edges.  Returns (2, dim P_r).
    """
    sigma0 = np.atleast_1d(np.asarray(sigma0, dtype=float))
    sigma_b = np.asarray(sigma_b, dtype=float).reshape(3, -1)
    j = sigma_b.shape[1] - 1
    if len(sigma0) != tri_dim(j):
        raise ValueError("sigma0 and sigma_b degrees disagree")
    exact = tri_exactness or max(2 * max(j, r) + 2, 2)
    tri_rule = tri_quadrature(exact)
    edge_rule = edge_quadrature(max(j, r) + 2)
    verts = mesh.vertices[mesh.triangles[t]][None]
    ends = mesh.vertices[mesh.edges[mesh.tri_edges[t]]][None]
    G = weak_gradient_matrices(verts, mesh.tri_normals[t][None], ends, j, r, tri_rule, edge_rule)[0]
    return G @ np.concatenate([sigma0, sigma_b.ravel()])


class Discretization:
    """Quadrature data, basis tables and local operators for one mesh and (k, j).

    Uses a triangle rule of exactness 2k + 4 and k + 3 Gauss points per edge.
    """

    def __init__(self, mesh: Mesh, k: int, j: int,
                 tri_exactness: int | None = None, edge_points: int | None = None):
        self.mesh = mesh
        self.k, self.j, self.r = k, j, k - 1
        self.W = WeakSpace(mesh, j)
        self.M = PrimalSpace(mesh, k)
        self.tri_rule = tri_quadrature(tri_exactness or 2 * k + 4)
        self.edge_rule = edge_quadrature(edge_points or k + 3)

        verts = mesh.vertices[mesh.triangles]
        nT = mesh.n_triangles
        self.areas = mesh.areas
        self.h = mesh.diameters
        self.basis_j = TriBasis(j, verts)
        self.basis_r = TriBasis(self.r, verts)

        self.xq = map_to_triangles(verts, self.tri_rule.points)
        self.wq = 2.0 * self.areas[:, None] * self.tri_rule.weights
        self.phi_j, self.dphi_j = self.basis_j.eval(self.xq)
        self.phi_r, self.dphi_r = self.basis_r.eval(self.xq)

        s = self.edge_rule.points[:, 0]
        ends = mesh.vertices[mesh.edges]
        self.xe = ends[:, None, 0, :] + s[None, :, None] * (ends[:, 1, :] - ends[:, 0, :])[:, None, :]
        self.we = mesh.edge_lengths[:, None] * self.edge_rule.weights
        self.psi = EdgeBasis(j, None).eval_param(s)  # (neq, nb), same on every edge

        te = mesh.tri_edges
        self.normals = mesh.tri_normals
        self.xte = self.xe[te]
        self.wte = self.we[te]
        neq = len(s)
        phi_j_e, dphi_j_e = self.basis_j.eval(self.xte.reshape(nT, 3 * neq, 2))
        self.phi_j_e = phi_j_e.reshape(nT, 3, neq, -1)
        self.dphi_j_e = dphi_j_e.reshape(nT, 3, neq, -1, 2)
        self.phi_r_e = self.basis_r.eval(self.xte.reshape(nT, 3 * neq, 2))[0].reshape(nT, 3, neq, -1)

        self.gram_j = np.einsum("tq,tqa,tqb->tab", self.wq, self.phi_j, self.phi_j)
        self.gram_r = np.einsum("tq,tqa,tqb->tab", self.wq, self.phi_r, self.phi_r)
        self.gram_e = np.einsum("eq,qa,qb->eab", self.we, self.psi, self.psi)

        self.G = weak_gradient_matrices(verts, self.normals, ends[te], j, self.r,
                                        self.tri_rule, self.edge_rule)
        # weak gradient of every local basis function at the triangle quadrature points
        self.grad_w = np.einsum("tqi,tcia->tqca", self.phi_r, self.G)

        # sigma_0 - sigma_b of every local basis function at the edge points
        n0, nb = self.W.n0, self.W.nb
        D = np.zeros((nT, 3, neq, self.W.nloc))
        D[..., :n0] = self.phi_j_e
        for le in range(3):
            D[:, le, :, n0 + le * nb: n0 + (le + 1) * nb] = -self.psi
        self.jump_basis = D

    # evaluation helpers -------------------------------------------------

    def lambda0_at_quad(self, lam: np.ndarray) -> np.ndarray:
        return np.einsum("tqa,ta->tq", self.phi_j, self.W.interior_block(lam))

    def grad_lambda0_at_quad(self, lam: np.ndarray) -> np.ndarray:
        return np.einsum("tqac,ta->tqc", self.dphi_j, self.W.interior_block(lam))

    def lambda_jump_at_edges(self, lam: np.ndarray) -> np.ndarray:
        """lambda_0 - lambda_b at every triangle-edge quadrature point (nT, 3, neq)."""
        return np.einsum("tlqa,ta->tlq", self.jump_basis, self.W.local(lam))

    def lambda_b_at_edges(self, lam: np.ndarray) -> np.ndarray:
        """lambda_b at global edge points (nE, neq), zero on outflow edges."""
        return self.W.edge_block(lam) @ self.psi.T

    def primal_at_quad(self, u: np.ndarray) -> np.ndarray:
        return np.einsum("tqa,ta->tq", self.phi_r, self.M.local(u))

    def primal_at_edges(self, u: np.ndarray) -> np.ndarray:
        return np.einsum("tlqa,ta->tlq", self.phi_r_e, self.M.local(u))

    # projections --------------------------------------------------------

    def project_Q0(self, w) -> np.ndarray:
        vals = w(self.xq[..., 0], self.xq[..., 1])
        rhs = np.einsum("tq,tqa,tq->ta", self.wq, self.phi_j, vals)
        return _solve_spd(self.gram_j, rhs[..., None])[..., 0]

    def project_Qb(self, w) -> np.ndarray:
        vals = w(self.xe[..., 0], self.xe[..., 1])
        rhs = np.einsum("eq,qa,eq->ea", self.we, self.psi, vals)
        return _solve_spd(self.gram_e, rhs[..., None])[..., 0]

    def project_primal_values(self, vals: np.ndarray) -> np.ndarray:
        """P_{k-1} coefficients (nT, nk) of data sampled at the quadrature points."""
        rhs = np.einsum("tq,tqa,tq...->ta...", self.wq, self.phi_r, vals)
        if rhs.ndim == 2:
            return _solve_spd(self.gram_r, rhs[..., None])[..., 0]
        return _solve_spd(self.gram_r, rhs)


def project_Qh(disc: Discretization, w) -> WeakField:
    """Elementwise Q_0 w and edgewise Q_b w, packed into W_{j,h}^{0,Gamma+}."""
    interior = disc.project_Q0(w)
    edge = disc.project_Qb(w)
    return WeakField(disc.W, disc.W.pack(interior, edge))


def project_Mh(disc: Discretization, w) -> PrimalField:
    """L2 projection onto piecewise P_{k-1}."""
    vals = w(disc.xq[..., 0], disc.xq[..., 1])
    return PrimalField(disc.M, disc.project_primal_values(np.asarray(vals, dtype=float)).reshape(-1))


def weak_gradient(disc: Discretization, sigma: np.ndarray) -> np.ndarray:
    """P_{k-1} coefficients (nT, 2, nr) of the weak gradient of a global weak function."""
    return np.einsum("tcia,ta->tci", disc.G, disc.W.local(sigma))
