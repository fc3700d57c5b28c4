"""Assembly of the linearised stabiliser, the coupling form b and the load.

Global unknowns are ordered ``[lambda (WeakSpace dofs), u (PrimalSpace dofs)]``.
All element-local arrays are computed in one batched pass and scattered in
element order, so repeated assemblies are bitwise identical.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import EdgeTag
from .problems import ProblemSpec
from .space import Discretization

THREADS_ENV = "LPPDWG_NUM_THREADS"


def _chunked(fn, n: int, *arrays):
    """Apply ``fn`` to element chunks, optionally on a thread pool.

    Results are concatenated in chunk order, so the outcome does not depend
    on the thread count.
    """
    threads = int(os.environ.get(THREADS_ENV, "1") or 1)
    if threads <= 1 or n < 2048:
        return fn(*arrays)
    bounds = np.linspace(0, n, threads + 1).astype(int)
    parts = [tuple(a[lo:hi] for a in arrays) for lo, hi in zip(bounds[:-1], bounds[1:])]
    with ThreadPoolExecutor(threads) as pool:
        out = list(pool.map(lambda args: fn(*args), parts))
    return np.concatenate(out, axis=0)


class TransportData:
    """Problem coefficients sampled at the quadrature points of a discretization."""

    def __init__(self, disc: Discretization, problem: ProblemSpec):
        self.disc = disc
        self.problem = problem
        mesh = disc.mesh
        reg_q = np.broadcast_to(mesh.regions[:, None], disc.xq.shape[:2])
        x, y = disc.xq[..., 0], disc.xq[..., 1]
        self.beta_q = np.asarray(problem.beta(x, y, reg_q), dtype=float)
        self.div_beta_q = np.broadcast_to(problem.div_beta(x, y, reg_q), x.shape).astype(float)
        self.c_q = np.broadcast_to(problem.c(x, y), x.shape).astype(float)
        self.f_q = np.broadcast_to(problem.eval_f(x, y, reg_q), x.shape).astype(float)

        reg_e = np.broadcast_to(mesh.regions[:, None, None], disc.xte.shape[:3])
        self.beta_te = np.asarray(problem.beta(disc.xte[..., 0], disc.xte[..., 1], reg_e), dtype=float)
        self.bn_te = np.einsum("tlqc,tlc->tlq", self.beta_te, disc.normals)

        self.inflow = np.flatnonzero(mesh.edge_tags == EdgeTag.INFLOW)
        t_in = mesh.edge_tris[self.inflow, 0]
        loc = np.argmax(mesh.tri_edges[t_in] == self.inflow[:, None], axis=1)
        self.inflow_tri, self.inflow_local = t_in, loc
        self.bn_inflow = self.bn_te[t_in, loc]
        xe = disc.xe[self.inflow]
        self.g_inflow = np.broadcast_to(problem.eval_g(xe[..., 0], xe[..., 1]), xe.shape[:2]).astype(float) \
            if len(self.inflow) else np.zeros((0, disc.xe.shape[1]))

        n0 = disc.W.n0
        # beta . grad(phi) - c phi for the interior P_j basis
        self.dual_residual_basis = (np.einsum("tqc,tqac->tqa", self.beta_q, disc.dphi_j)
                                    - self.c_q[..., None] * disc.phi_j)
        # beta . grad_w(sigma) - c sigma_0 for every local weak basis function
        bw = np.einsum("tqc,tqca->tqa", self.beta_q, disc.grad_w)
        bw[..., :n0] -= self.c_q[..., None] * disc.phi_j
        self.b_integrand = bw

    def dual_residual(self, lam: np.ndarray) -> np.ndarray:
        """beta . grad(lambda_0) - c lambda_0 at the triangle quadrature points."""
        return np.einsum("tqa,ta->tq", self.dual_residual_basis, self.disc.W.interior_block(lam))


@dataclass(frozen=True)
class StabWeights:
    edge: np.ndarray  # (nT, 3, neq)
    tri: np.ndarray   # (nT, nq)


@dataclass
class SaddleSystem:
    matrix: sp.csc_matrix
    rhs: np.ndarray
    n_lambda: int
    n_u: int

    def split(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return x[: self.n_lambda], x[self.n_lambda:]


def compute_weights(data: TransportData, lam: np.ndarray, p: float, epsilon: float) -> StabWeights:
    """Lagged weights (|.| + eps)^(p - 2) at every stabiliser quadrature point."""
    if p <= 1:
        raise ValueError("p must be > 1")
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    jump = data.disc.lambda_jump_at_edges(lam)
    res = data.dual_residual(lam)
    return StabWeights(edge=np.power(np.abs(jump) + epsilon, p - 2.0),
                       tri=np.power(np.abs(res) + epsilon, p - 2.0))


def unit_weights(disc: Discretization) -> StabWeights:
    nT = disc.mesh.n_triangles
    return StabWeights(edge=np.ones((nT, 3, len(disc.edge_rule.weights))),
                       tri=np.ones((nT, len(disc.tri_rule.weights))))


def _scatter(local: np.ndarray, rows: np.ndarray, cols: np.ndarray, shape) -> sp.csr_matrix:
    R = np.broadcast_to(rows[:, :, None], local.shape)
    C = np.broadcast_to(cols[:, None, :], local.shape)
    keep = (R >= 0) & (C >= 0)
    return sp.coo_matrix((local[keep], (R[keep], C[keep])), shape=shape).tocsr()


def local_stabilizer(data: TransportData, weights: StabWeights, rho: float, tau: float,
                     p: float) -> np.ndarray:
    """Element matrices (nT, nloc, nloc) of the linearised stabiliser."""
    disc = data.disc
    scale = rho * disc.h ** (1.0 - p)
    nloc = disc.W.nloc
    n0 = disc.W.n0

    def edge_part(wte, w, D, s):
        return np.einsum("tlq,tlqa,tlqb->tab", wte * w, D, D) * s[:, None, None]

    S = _chunked(edge_part, disc.mesh.n_triangles, disc.wte, weights.edge, disc.jump_basis, scale)
    if tau > 0:
        A = data.dual_residual_basis
        S = S.copy()
        S[:, :n0, :n0] += tau * np.einsum("tq,tqa,tqb->tab", disc.wq * weights.tri, A, A)
    assert S.shape[1:] == (nloc, nloc)
    return S


def assemble_s_tilde(data: TransportData, weights: StabWeights, rho: float, tau: float,
                     p: float) -> sp.csr_matrix:
    if rho <= 0:
        raise ValueError("rho must be > 0")
    if tau < 0:
        raise ValueError("tau must be >= 0")
    W = data.disc.W
    S = local_stabilizer(data, weights, rho, tau, p)
    return _scatter(S, W.local_dofs, W.local_dofs, (W.ndofs, W.ndofs))


def local_b(data: TransportData) -> np.ndarray:
    """Element matrices (nT, nk, nloc) of b(v, sigma)."""
    disc = data.disc
    return np.einsum("tq,tqi,tqa->tia", disc.wq, disc.phi_r, data.b_integrand)


def assemble_b(data: TransportData) -> sp.csr_matrix:
    disc = data.disc
    return _scatter(local_b(data), disc.M.local_dofs, disc.W.local_dofs,
                    (disc.M.ndofs, disc.W.ndofs))


def assemble_rhs(data: TransportData) -> np.ndarray:
    """Load functional: inflow boundary term minus (f, sigma_0)."""
    disc = data.disc
    W = disc.W
    F = np.zeros(W.ndofs)
    F[: W.n_interior_dofs] = -np.einsum("tq,tqa,tq->ta", disc.wq, disc.phi_j, data.f_q).reshape(-1)
    if len(data.inflow):
        vals = np.einsum("eq,qm,eq,eq->em", disc.we[data.inflow], disc.psi,
                         data.bn_inflow, data.g_inflow)
        idx = W.edge_offset[data.inflow][:, None] + np.arange(W.nb)
        np.add.at(F, idx, vals)
    return F


def build_saddle(S: sp.spmatrix, B: sp.spmatrix, F: np.ndarray) -> SaddleSystem:
    K = sp.bmat([[S, B.T], [B, None]], format="csc")
    rhs = np.concatenate([F, np.zeros(B.shape[0])])
    return SaddleSystem(K, rhs, S.shape[0], B.shape[0])


def _signed_power(x: np.ndarray, e: float) -> np.ndarray:
    return np.sign(x) * np.abs(x) ** e


def eval_s_nonlinear(data: TransportData, lam: np.ndarray, sigma: np.ndarray, p: float,
                     rho: float, tau: float) -> float:
    """The unsmoothed L^p stabiliser s(lambda, sigma), evaluated by quadrature."""
    disc = data.disc
    jl = disc.lambda_jump_at_edges(lam)
    js = disc.lambda_jump_at_edges(sigma)
    edge = np.einsum("tlq,tlq->t", disc.wte, _signed_power(jl, p - 1.0) * js)
    total = float(np.sum(rho * disc.h ** (1.0 - p) * edge))
    if tau > 0:
        rl = data.dual_residual(lam)
        rs = data.dual_residual(sigma)
        total += tau * float(np.sum(disc.wq * _signed_power(rl, p - 1.0) * rs))
    return total


def triple_norm(data: TransportData, sigma: np.ndarray, p: float, rho: float, tau: float) -> float:
    """s(sigma, sigma) ** (1/p)."""
    return max(eval_s_nonlinear(data, sigma, sigma, p, rho, tau), 0.0) ** (1.0 / p)
