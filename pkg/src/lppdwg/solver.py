"""Sparse direct solves of the saddle system and the lagged-weight fixed-point loop."""
from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import forms
from .forms import SaddleSystem, StabWeights, TransportData
from .mesh import Mesh, classify_boundary
from .problems import ProblemSpec
from .space import Discretization, PrimalField, WeakField

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10


class ConfigError(ValueError):
    pass


class SingularSystemError(RuntimeError):
    pass


class Status(enum.Enum):
    CONVERGED = "Converged"
    MAX_ITERS = "MaxIters"
    SINGULAR = "SingularSystem"


@dataclass(frozen=True)
class SolverConfig:
    p: float = 2.0
    rho: float = 1.0
    tau: float = 0.0
    eps: float = 1e-4
    stop_tol: float = 1e-5
    max_iters: int = 100
    k: int = 2
    j: int = 1
    pivot_tol: float = 1e-14

    def __post_init__(self):
        if not self.p > 1:
            raise ConfigError(f"p must be > 1, got {self.p}")
        if not self.rho > 0:
            raise ConfigError(f"rho must be > 0, got {self.rho}")
        if not self.tau >= 0:
            raise ConfigError(f"tau must be >= 0, got {self.tau}")
        if not self.eps > 0:
            raise ConfigError(f"eps must be > 0, got {self.eps}")
        if not self.stop_tol > 0:
            raise ConfigError("stop_tol must be > 0")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.j not in (self.k - 1, self.k):
            raise ConfigError(f"j must be k-1 or k (k={self.k}), got {self.j}")
        if not self.pivot_tol >= 0:
            raise ConfigError("pivot_tol must be >= 0")

    @property
    def q(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def outside_theory(self) -> bool:
        """j = k with tau = 0: uniqueness is not covered by the theory."""
        return self.j == self.k and self.tau == 0

    def to_dict(self) -> dict:
        return dict(p=self.p, rho=self.rho, tau=self.tau, eps=self.eps, stop_tol=self.stop_tol,
                    max_iters=self.max_iters, k=self.k, j=self.j, pivot_tol=self.pivot_tol)


@dataclass
class IterationLog:
    updates: list[float] = field(default_factory=list)
    residuals: list[float] = field(default_factory=list)
    times: list[float] = field(default_factory=list)
    status: Status | None = None
    message: str = ""

    @property
    def iterations(self) -> int:
        return len(self.updates)

    def to_dict(self) -> dict:
        return {"status": self.status.value if self.status else None,
                "iterations": self.iterations, "updates": self.updates,
                "residuals": self.residuals, "times": self.times, "message": self.message}


@dataclass
class Solution:
    disc: Discretization
    data: TransportData
    config: SolverConfig
    lam: WeakField
    u: PrimalField
    log: IterationLog
    weights: StabWeights
    system: SaddleSystem

    @property
    def converged(self) -> bool:
        return self.log.status is Status.CONVERGED


def _equilibrate(A: sp.csc_matrix, sweeps: int = 5) -> np.ndarray:
    """Symmetric Ruiz scaling: returns d with diag(d) A diag(d) having unit row maxima."""
    n = A.shape[0]
    d = np.ones(n)
    B = abs(A).tocsr()
    for _ in range(sweeps):
        scaled = sp.diags(d) @ B @ sp.diags(d)
        r = np.asarray(scaled.max(axis=1).toarray()).ravel()
        r[r == 0] = 1.0
        d /= np.sqrt(r)
    return d


def backward_residual(A, x, b) -> float:
    bn = np.max(np.abs(b)) if b.size else 0.0
    r = np.max(np.abs(A @ x - b)) if b.size else 0.0
    if bn == 0:
        return float(r)
    return float(r / bn)


def solve_linear(A: sp.spmatrix, b: np.ndarray, pivot_tol: float = 1e-14,
                 refine: int = 3) -> tuple[np.ndarray, float]:
    """Scaled sparse LU with a few steps of iterative refinement.

    Returns the solution and its backward residual; raises SingularSystemError
    on a zero or tiny pivot or when the residual stays above 1e-10.
    """
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    if not np.any(b):
        return np.zeros_like(b), 0.0
    d = _equilibrate(A)
    As = sp.csc_matrix(sp.diags(d) @ A @ sp.diags(d))
    try:
        lu = spla.splu(As)
    except RuntimeError as exc:
        raise SingularSystemError(str(exc)) from exc
    piv = np.abs(lu.U.diagonal())
    if piv.size and piv.min() <= pivot_tol * piv.max():
        raise SingularSystemError(f"pivot ratio {piv.min() / piv.max():.3e} below tolerance")
    x = d * lu.solve(d * b)
    res = backward_residual(A, x, b)
    for _ in range(refine):
        if res <= 1e-14:
            break
        x = x + d * lu.solve(d * (b - A @ x))
        new = backward_residual(A, x, b)
        if new >= res:
            res = min(res, new)
            break
        res = new
    if not np.all(np.isfinite(x)) or res > RESIDUAL_TOL:
        raise SingularSystemError(f"backward residual {res:.3e} exceeds {RESIDUAL_TOL:g}")
    return x, res


def solve_linear_step(system: SaddleSystem, disc: Discretization,
                      pivot_tol: float = 1e-14) -> tuple[WeakField, PrimalField, float]:
    x, res = solve_linear(system.matrix, system.rhs, pivot_tol)
    lam, u = system.split(x)
    return WeakField(disc.W, lam), PrimalField(disc.M, u), res


def prepare(problem: ProblemSpec, mesh: Mesh, config: SolverConfig) -> tuple[Discretization, TransportData]:
    mesh = classify_boundary(mesh.with_regions(problem.region), problem.beta)
    disc = Discretization(mesh, config.k, config.j)
    return disc, TransportData(disc, problem)


def fixed_point_solve(problem: ProblemSpec, mesh: Mesh, config: SolverConfig,
                      disc: Discretization | None = None,
                      data: TransportData | None = None) -> Solution:
    """Lagged-weight iteration started from zero.

    Stops when the sup-norm of the coefficient update of both unknowns is at
    most ``config.stop_tol``.  A singular step ends the loop with status
    SingularSystem; the error is re-raised after logging.
    """
    if disc is None or data is None:
        disc, data = prepare(problem, mesh, config)
    if config.outside_theory:
        log.warning("j = k with tau = 0 is outside the uniqueness theory")
    B = forms.assemble_b(data)
    F = forms.assemble_rhs(data)
    lam = np.zeros(disc.W.ndofs)
    u = np.zeros(disc.M.ndofs)
    it_log = IterationLog()
    weights = system = None
    lam_f = u_f = None
    for it in range(config.max_iters):
        t0 = time.perf_counter()
        weights = forms.compute_weights(data, lam, config.p, config.eps)
        S = forms.assemble_s_tilde(data, weights, config.rho, config.tau, config.p)
        system = forms.build_saddle(S, B, F)
        try:
            lam_f, u_f, res = solve_linear_step(system, disc, config.pivot_tol)
        except SingularSystemError as exc:
            it_log.status = Status.SINGULAR
            it_log.message = str(exc)
            exc.log = it_log
            raise
        update = max(np.max(np.abs(lam_f.coeffs - lam), initial=0.0),
                     np.max(np.abs(u_f.coeffs - u), initial=0.0))
        lam, u = lam_f.coeffs, u_f.coeffs
        it_log.updates.append(float(update))
        it_log.residuals.append(res)
        it_log.times.append(time.perf_counter() - t0)
        log.debug("iteration %d: update %.3e residual %.3e", it + 1, update, res)
        if update <= config.stop_tol:
            it_log.status = Status.CONVERGED
            break
    else:
        it_log.status = Status.MAX_ITERS
        it_log.message = f"no convergence in {config.max_iters} iterations"
    return Solution(disc, data, config, lam_f, u_f, it_log, weights, system)
