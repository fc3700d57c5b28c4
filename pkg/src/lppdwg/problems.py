"""Registered transport test problems on the unit square and the L-shape.

All callables are vectorised over numpy arrays ``x, y`` (and ``region`` for
region-dependent coefficients).  Region 0 / 1 select the two sides of a
piecewise-defined convection field.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

pi = np.pi


def _const(value):
    def fn(x, y, *rest):
        return np.full(np.broadcast(x, y).shape, float(value))
    return fn


def _constvec(a, b):
    def fn(x, y, *rest):
        shape = np.broadcast(x, y).shape
        return np.broadcast_to(np.array([a, b], dtype=float), shape + (2,)).copy()
    return fn


def _zero_region(x, y):
    return np.zeros(np.broadcast(x, y).shape, dtype=np.int64)


def _vec(bx, by):
    return np.stack(np.broadcast_arrays(bx, by), axis=-1).astype(float)


def _piecewise_vec(b0, b1):
    def beta(x, y, region):
        region = np.broadcast_to(region, np.broadcast(x, y).shape)
        return np.where((region == 0)[..., None], b0(x, y), b1(x, y))
    return beta


def _piecewise_scalar(s0, s1):
    def fn(x, y, region):
        region = np.broadcast_to(region, np.broadcast(x, y).shape)
        return np.where(region == 0, s0(x, y), s1(x, y))
    return fn


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    domain: str                  # "square" or "lshape"
    beta: Callable               # beta(x, y, region) -> (..., 2)
    div_beta: Callable           # div_beta(x, y, region)
    c: Callable                  # c(x, y)
    region: Callable = _zero_region
    u: Callable | None = None
    grad_u: Callable | None = None
    g: Callable | None = None
    f_value: float | None = None
    data_only: bool = False
    description: str = ""
    defaults: dict = field(default_factory=dict)

    @property
    def has_exact(self) -> bool:
        return self.u is not None and self.grad_u is not None

    def eval_f(self, x, y, region=None):
        """Load function; derived from the exact solution unless set explicitly."""
        if self.f_value is not None:
            return np.full(np.broadcast(x, y).shape, float(self.f_value))
        if not self.has_exact:
            raise ValueError(f"problem {self.name!r} has neither an exact solution nor a load")
        if region is None:
            region = self.region(x, y)
        return eval_f_from_exact(self, x, y, region)

    def eval_g(self, x, y):
        if self.g is not None:
            return self.g(x, y)
        if self.u is None:
            raise ValueError(f"problem {self.name!r} has no inflow data")
        return self.u(x, y)

    def with_load(self, value: float) -> "ProblemSpec":
        return dataclasses.replace(self, f_value=float(value))


def eval_f_from_exact(problem: ProblemSpec, x, y, region):
    b = problem.beta(x, y, region)
    du = problem.grad_u(x, y)
    return (b[..., 0] * du[..., 0] + b[..., 1] * du[..., 1]
            + problem.div_beta(x, y, region) * problem.u(x, y)
            + problem.c(x, y) * problem.u(x, y))


def eval_f(problem: ProblemSpec, x, y, region=None):
    return problem.eval_f(x, y, region)


# exact solutions ---------------------------------------------------------

def _cc(x, y):
    return np.cos(pi * x) * np.cos(pi * y)


def _cc_grad(x, y):
    return _vec(-pi * np.sin(pi * x) * np.cos(pi * y), -pi * np.cos(pi * x) * np.sin(pi * y))


def _sc(x, y):
    return np.sin(pi * x) * np.cos(pi * y)


def _sc_grad(x, y):
    return _vec(pi * np.cos(pi * x) * np.cos(pi * y), -pi * np.sin(pi * x) * np.sin(pi * y))


def _t5_u(x, y):
    return x * (1 - x) * y * (1 - y) * (y - 0.25) ** 2


def _t5_grad(x, y):
    px = (1 - 2 * x) * y * (1 - y) * (y - 0.25) ** 2
    # d/dy [y(1-y)(y-1/4)^2]
    py = x * (1 - x) * ((1 - 2 * y) * (y - 0.25) ** 2 + 2 * y * (1 - y) * (y - 0.25))
    return _vec(px, py)


def _t8_u(x, y):
    return np.where(y < 0.5, np.cos(y - 0.5), 1.0) + np.sin(x + y)


def _t8_grad(x, y):
    cxy = np.cos(x + y)
    return _vec(cxy, cxy + np.where(y < 0.5, -np.sin(y - 0.5), 0.0))


def _registry() -> dict[str, ProblemSpec]:
    zero = _const(0.0)
    one = _const(1.0)
    probs = [
        ProblemSpec(
            "t1", "square",
            beta=lambda x, y, r: _vec(-y, x), div_beta=zero, c=one,
            u=_cc, grad_u=_cc_grad,
            description="rotation beta=[-y,x], c=1, u=cos(pi x)cos(pi y)",
            defaults={"k": 1, "j": 1}),
        ProblemSpec(
            "t2", "square",
            beta=lambda x, y, r: _vec(y - 0.5, 0.5 - x), div_beta=zero, c=one,
            u=_cc, grad_u=_cc_grad,
            description="centred rotation beta=[y-0.5,0.5-x], c=1, u=cos(pi x)cos(pi y)",
            defaults={"k": 1, "j": 1}),
        ProblemSpec(
            "t3", "square",
            beta=_constvec(1.0, 1.0), div_beta=zero, c=_const(-1.0),
            u=lambda x, y: np.cos(x) * np.sin(y),
            grad_u=lambda x, y: _vec(-np.sin(x) * np.sin(y), np.cos(x) * np.cos(y)),
            description="beta=[1,1], c=-1, u=cos(x)sin(y)",
            defaults={"k": 2, "j": 2}),
        ProblemSpec(
            "t4", "square",
            beta=_constvec(1.0, -1.0), div_beta=zero, c=one,
            u=_sc, grad_u=_sc_grad,
            description="beta=[1,-1], c=1, u=sin(pi x)cos(pi y)",
            defaults={"k": 2, "j": 1}),
        ProblemSpec(
            "t5", "lshape",
            beta=lambda x, y, r: _vec(y - 0.5, 0.25 - x), div_beta=zero, c=one,
            u=_t5_u, grad_u=_t5_grad,
            description="L-shape, beta=[y-0.5,-x+0.25], c=1, u=x(1-x)y(1-y)(y-1/4)^2",
            defaults={"k": 2, "j": 1}),
        ProblemSpec(
            "t6", "square",
            region=lambda x, y: (y >= 1 - x).astype(np.int64),
            beta=_piecewise_vec(lambda x, y: _vec(y + 1, -x - 1), lambda x, y: _vec(y - 2, 2 - x)),
            div_beta=zero, c=_const(-1.0),
            u=lambda x, y: np.sin(x) * np.cos(y),
            grad_u=lambda x, y: _vec(np.cos(x) * np.cos(y), -np.sin(x) * np.sin(y)),
            description="piecewise rotation across y=1-x, c=-1, u=sin(x)cos(y)",
            defaults={"k": 2, "j": 1}),
        ProblemSpec(
            "t7", "lshape",
            region=lambda x, y: (x + y >= 1).astype(np.int64),
            beta=_piecewise_vec(_constvec(1.0, -1.0), _constvec(-1.0, 1.0)),
            div_beta=zero, c=one,
            u=lambda x, y: np.sin(x) * np.cos(y),
            grad_u=lambda x, y: _vec(np.cos(x) * np.cos(y), -np.sin(x) * np.sin(y)),
            description="L-shape, beta=[1,-1] for x+y<1 and [-1,1] elsewhere, c=1, u=sin(x)cos(y)",
            defaults={"k": 2, "j": 1}),
        ProblemSpec(
            "t8", "square",
            region=lambda x, y: (y >= 0.5).astype(np.int64),
            beta=_piecewise_vec(lambda x, y: _vec(x - 2, 0.5 - y), lambda x, y: _vec(2 - x, 0.5 - y)),
            div_beta=_piecewise_scalar(zero, _const(-2.0)), c=zero,
            u=_t8_u, grad_u=_t8_grad,
            description="H^{1+eps} solution split at y=1/2, piecewise beta, c=0",
            defaults={"k": 2, "j": 1}),
        ProblemSpec(
            "f1", "square",
            region=lambda x, y: (x + y >= 1).astype(np.int64),
            beta=_piecewise_vec(_constvec(1.0, -1.0), _constvec(-2.0, 2.0)),
            div_beta=zero, c=zero,
            u=lambda x, y: np.where(x + y < 1, 1.0, -1.0),
            grad_u=lambda x, y: _vec(0.0 * x, 0.0 * y),
            g=lambda x, y: np.where(x < 0.5, 1.0, -1.0),
            f_value=0.0, data_only=True,
            description="discontinuous data: u=1 below y=1-x and -1 above",
            defaults={"k": 2, "j": 1, "tau": 0.0}),
        ProblemSpec(
            "f2", "square",
            region=lambda x, y: (y >= 1 - x).astype(np.int64),
            beta=_piecewise_vec(lambda x, y: _vec(-y, x), lambda x, y: _vec(1 - y, x - 1)),
            div_beta=zero, c=zero,
            g=lambda x, y: np.sin(2 * x), f_value=0.0, data_only=True,
            description="piecewise rotation, g=sin(2x), c=0",
            defaults={"k": 2, "j": 1, "tau": 0.0}),
        ProblemSpec(
            "f3", "square",
            beta=lambda x, y, r: _vec(0.5 - y, x - 0.5), div_beta=zero, c=one,
            g=_cc, f_value=0.0, data_only=True,
            description="centred rotation, g=cos(pi x)cos(pi y), c=1",
            defaults={"k": 2, "j": 1, "tau": 0.0}),
        ProblemSpec(
            "f4", "lshape",
            region=lambda x, y: (y >= 1 - x).astype(np.int64),
            beta=_piecewise_vec(lambda x, y: _vec(y + 1, -x - 1), lambda x, y: _vec(y - 2, 2 - x)),
            div_beta=zero, c=zero,
            g=lambda x, y: np.cos(5 * y), f_value=0.0, data_only=True,
            description="L-shape, piecewise rotation, g=cos(5y), c=0",
            defaults={"k": 2, "j": 1, "tau": 0.0}),
    ]
    return {p.name: p for p in probs}


_REGISTRY = _registry()


def registry() -> list[ProblemSpec]:
    return list(_REGISTRY.values())


def get_problem(name: str) -> ProblemSpec:
    try:
        return _REGISTRY[name.lower()]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(_REGISTRY)}") from None


def zero_problem(domain: str = "square") -> ProblemSpec:
    """Homogeneous data: f = 0, g = 0, beta = [1, 1], c = 0."""
    return ProblemSpec("zero", domain, beta=_constvec(1.0, 1.0),
                       div_beta=_const(0.0), c=_const(0.0), g=_const(0.0),
                       f_value=0.0, data_only=True, description="zero data")
