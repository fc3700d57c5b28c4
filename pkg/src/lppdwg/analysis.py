"""Error norms, convergence rates, the conservation audit and the inf-sup diagnostic."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .forms import TransportData, assemble_b
from .mesh import EdgeTag
from .problems import ProblemSpec
from .solver import Solution
from .space import Discretization, PrimalField, WeakField, project_Mh

UNDERFLOW = 1e-14


@dataclass(frozen=True)
class ErrorSet:
    e_h_0q: float
    eps0_0p: float
    epsb_0p: float
    eps0_1p: float
    eps0_2p: float | None = None
    u_raw_0q: float | None = None  # ||u_h - u|| without projecting u

    def as_dict(self) -> dict:
        return asdict(self)


def _lp(values: np.ndarray, weights: np.ndarray, p: float) -> float:
    return float(np.sum(weights * np.abs(values) ** p)) ** (1.0 / p)


def laplacian_j(disc: Discretization, lam: np.ndarray) -> np.ndarray:
    """Piecewise Laplacian of lambda_0 at the triangle quadrature points."""
    basis = disc.basis_j
    s = basis.scale[:, None]
    X = (disc.xq - basis.center[:, None, :]) / s[..., None]
    x, y = X[..., 0:1], X[..., 1:2]
    a, b = basis.exponents[:, 0], basis.exponents[:, 1]
    dxx = np.where(a > 1, a * (a - 1) * x ** np.maximum(a - 2, 0), 0.0) * y ** b
    dyy = np.where(b > 1, b * (b - 1) * y ** np.maximum(b - 2, 0), 0.0) * x ** a
    lap = (dxx + dyy) / s[..., None] ** 2
    return np.einsum("tqa,ta->tq", lap, disc.W.interior_block(lam))


def compute_errors(disc: Discretization, u: np.ndarray, lam: np.ndarray,
                   problem: ProblemSpec, p: float) -> ErrorSet | None:
    """All error metrics; ``None`` when the problem has no exact solution.

    The dual error is lambda_h itself since the exact multiplier vanishes.
    """
    if not problem.has_exact:
        return None
    q = p / (p - 1.0)
    wq = disc.wq
    uq = project_Mh(disc, problem.u).coeffs
    e = disc.primal_at_quad(u - uq)
    raw = disc.primal_at_quad(u) - problem.u(disc.xq[..., 0], disc.xq[..., 1])
    lam0 = disc.lambda0_at_quad(lam)
    grad = np.linalg.norm(disc.grad_lambda0_at_quad(lam), axis=-1)

    lb = disc.W.edge_block(lam) @ disc.psi.T           # (nE, neq)
    lbt = lb[disc.mesh.tri_edges]                       # (nT, 3, neq)
    epsb = float(np.sum(disc.h[:, None, None] * disc.wte * np.abs(lbt) ** p)) ** (1.0 / p)

    eps2 = None
    if disc.j == disc.k:
        eps2 = _lp(laplacian_j(disc, lam), wq, p)
    return ErrorSet(e_h_0q=_lp(e, wq, q), eps0_0p=_lp(lam0, wq, p), epsb_0p=epsb,
                    eps0_1p=_lp(grad, wq, p), eps0_2p=eps2, u_raw_0q=_lp(raw, wq, q))


def convergence_rate(errors, inv_h=None) -> list[float]:
    """Observed orders between consecutive levels; NaN when an error underflows.

    Without ``inv_h`` the levels are assumed to halve h, so the rate is
    log2(e_i / e_{i+1}).
    """
    errors = [float(e) for e in errors]
    if inv_h is None:
        inv_h = [2.0 ** i for i in range(len(errors))]
    if len(inv_h) != len(errors):
        raise ValueError("errors and inv_h differ in length")
    rates = []
    for i in range(len(errors) - 1):
        a, b = errors[i], errors[i + 1]
        if a < UNDERFLOW or b < UNDERFLOW or not (math.isfinite(a) and math.isfinite(b)):
            rates.append(float("nan"))
        else:
            rates.append(math.log(a / b) / math.log(inv_h[i + 1] / inv_h[i]))
    return rates


def rate_table(levels: list[ErrorSet]) -> dict[str, list[float]]:
    """Rates per metric for a list of per-level error sets."""
    out = {}
    for key in ("e_h_0q", "eps0_0p", "epsb_0p", "eps0_1p", "eps0_2p"):
        vals = [getattr(es, key) for es in levels]
        if any(v is None for v in vals):
            continue
        out[key] = convergence_rate(vals)
    return out


# conservation ----------------------------------------------------------------

class NotConvergedError(RuntimeError):
    pass


@dataclass
class ConservationAudit:
    element_residual: np.ndarray   # (nT,)
    element_scale: np.ndarray      # (nT,)
    edge_jump: np.ndarray          # (n interior edges,)
    edge_scale: np.ndarray
    flux: np.ndarray               # (nT, 3, neq), F_h . n at edge points

    @property
    def max_element_residual(self) -> float:
        return float(self.element_residual.max(initial=0.0))

    @property
    def max_edge_jump(self) -> float:
        return float(self.edge_jump.max(initial=0.0))

    @staticmethod
    def _relative(r, s):
        return float(np.max(r / np.where(s > 0, s, 1.0), initial=0.0))

    @property
    def max_relative_element(self) -> float:
        return self._relative(self.element_residual, self.element_scale)

    @property
    def max_relative_edge(self) -> float:
        return self._relative(self.edge_jump, self.edge_scale)

    def summary(self) -> dict:
        return {"max_element_residual": self.max_element_residual,
                "max_edge_jump": self.max_edge_jump,
                "max_relative_element": self.max_relative_element,
                "max_relative_edge": self.max_relative_edge}


def projected_flux(data: TransportData, u: np.ndarray) -> np.ndarray:
    """Elementwise L2 projection of beta u_h onto [P_{k-1}]^2, at triangle-edge points."""
    disc = data.disc
    bu = data.beta_q * disc.primal_at_quad(u)[..., None]
    coef = disc.project_primal_values(bu)               # (nT, nk, 2)
    return np.einsum("tlqa,tac->tlqc", disc.phi_r_e, coef)


def conservation_audit(solution: Solution) -> ConservationAudit:
    """Element balance and interior flux continuity for a converged solve.

    The numerical flux is F_h . n = -rho h^(1-p) w_e (lambda_0 - lambda_b)
    + Pi(beta u_h) . n and the numerical solution is
    u_h + tau w_T (beta . grad lambda_0 - c lambda_0), with w the weights of
    the final linear solve.
    """
    if not solution.converged:
        raise NotConvergedError("conservation audit requires a converged solution")
    data, disc, cfg = solution.data, solution.disc, solution.config
    lam, u, w = solution.lam.coeffs, solution.u.coeffs, solution.weights
    mesh = disc.mesh

    jump = disc.lambda_jump_at_edges(lam)
    diff = -cfg.rho * disc.h[:, None, None] ** (1.0 - cfg.p) * w.edge * jump
    adv = np.einsum("tlqc,tlc->tlq", projected_flux(data, u), disc.normals)
    flux = diff + adv

    u_tilde = disc.primal_at_quad(u) + cfg.tau * w.tri * data.dual_residual(lam)
    bnd = np.einsum("tlq,tlq->t", disc.wte, flux)
    react = np.einsum("tq,tq->t", disc.wq, data.c_q * u_tilde)
    load = np.einsum("tq,tq->t", disc.wq, data.f_q)
    residual = np.abs(bnd + react - load)
    scale = (np.einsum("tlq,tlq->t", disc.wte, np.abs(flux))
             + np.einsum("tq,tq->t", disc.wq, np.abs(data.c_q * u_tilde) + np.abs(data.f_q)))

    inner = mesh.interior_edges
    t0, t1 = mesh.edge_tris[inner, 0], mesh.edge_tris[inner, 1]
    l0 = np.argmax(mesh.tri_edges[t0] == inner[:, None], axis=1)
    l1 = np.argmax(mesh.tri_edges[t1] == inner[:, None], axis=1)
    total = flux[t0, l0] + flux[t1, l1]                 # (nI, neq)
    we = disc.we[inner]
    moments = np.einsum("eq,qm,eq->em", we, disc.psi, total)
    # the local data scale of an edge is that of its two elements
    return ConservationAudit(element_residual=residual, element_scale=scale,
                             edge_jump=np.linalg.norm(moments, axis=1),
                             edge_scale=np.maximum(scale[t0], scale[t1]), flux=flux)


# M_h norm and inf-sup test function ------------------------------------------------

def _primal_residual_parts(data: TransportData, v: np.ndarray):
    """div(beta v) + c v at the triangle points and the normal-flux jump per edge point."""
    disc = data.disc
    mesh = disc.mesh
    vq = disc.primal_at_quad(v)
    dv = np.einsum("tqac,ta->tqc", disc.dphi_r, disc.M.local(v))
    r = data.div_beta_q * vq + np.einsum("tqc,tqc->tq", data.beta_q, dv) + data.c_q * vq

    side = data.bn_te * disc.primal_at_edges(v)         # (nT, 3, neq)
    nE, neq = mesh.n_edges, side.shape[-1]
    J = np.zeros((nE, neq))
    np.add.at(J, mesh.tri_edges.reshape(-1), side.reshape(-1, neq))
    hsum = np.zeros(nE)
    np.add.at(hsum, mesh.tri_edges.reshape(-1), np.repeat(disc.h, 3))
    count = np.where(mesh.edge_tris[:, 1] >= 0, 2.0, 1.0)
    h_e = hsum / count
    active = mesh.edge_tags != EdgeTag.OUTFLOW
    return r, J, h_e, active


def mh_norm(data: TransportData, v: PrimalField | np.ndarray, q: float) -> float:
    """Seminorm: element residuals weighted by h_T^q, plus normal-flux jumps on
    interior and inflow edges weighted by the mean adjacent diameter."""
    v = v.coeffs if isinstance(v, PrimalField) else np.asarray(v, dtype=float)
    disc = data.disc
    r, J, h_e, active = _primal_residual_parts(data, v)
    elem = np.sum(disc.h[:, None] ** q * disc.wq * np.abs(r) ** q)
    edge = np.sum((h_e[:, None] * disc.we * np.abs(J) ** q)[active])
    return float(elem + edge) ** (1.0 / q)


def infsup_test_function(data: TransportData, v: PrimalField | np.ndarray, q: float) -> WeakField:
    """The weak function whose pairing with v reproduces ``mh_norm(v) ** q``."""
    v = v.coeffs if isinstance(v, PrimalField) else np.asarray(v, dtype=float)
    disc = data.disc
    W = disc.W
    r, J, h_e, active = _primal_residual_parts(data, v)
    sr = np.sign(r) * np.abs(r) ** (q - 1.0)
    rhs0 = np.einsum("tq,tqa,tq->ta", disc.wq, disc.phi_j, sr)
    s0 = -disc.h[:, None] ** q * np.linalg.solve(disc.gram_j, rhs0[..., None])[..., 0]
    sJ = np.sign(J) * np.abs(J) ** (q - 1.0)
    rhsb = np.einsum("eq,qa,eq->ea", disc.we, disc.psi, sJ)
    sb = h_e[:, None] * np.linalg.solve(disc.gram_e, rhsb[..., None])[..., 0]
    sb[~active] = 0.0
    return WeakField(W, W.pack(s0, sb))


def b_value(data: TransportData, v: np.ndarray, sigma: np.ndarray, B=None) -> float:
    """b(v, sigma) through the assembled coupling matrix."""
    B = assemble_b(data) if B is None else B
    return float(np.asarray(v) @ (B @ np.asarray(sigma)))


def commutation_defect(disc: Discretization, w, grad_w) -> np.ndarray:
    """Per-element L2 norm of grad_w(Q_h w) - Q(grad w), with Q_b w kept on every edge."""
    mesh = disc.mesh
    local = np.concatenate([disc.project_Q0(w),
                            disc.project_Qb(w)[mesh.tri_edges].reshape(mesh.n_triangles, -1)], axis=1)
    gw = np.einsum("tcia,ta->tci", disc.G, local)
    g = disc.project_primal_values(np.stack(grad_w(disc.xq[..., 0], disc.xq[..., 1]), axis=-1))
    diff = np.einsum("tqi,tci->tqc", disc.phi_r, gw - np.moveaxis(g, -1, 1))
    return np.sqrt(np.einsum("tq,tqc->t", disc.wq, diff ** 2))
