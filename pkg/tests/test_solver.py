import numpy as np
import pytest
import scipy.sparse as sp

from lppdwg import forms
from lppdwg.mesh import build_structured_square
from lppdwg.problems import ProblemSpec, _const, _constvec, get_problem, zero_problem
from lppdwg.solver import (ConfigError, SingularSystemError, SolverConfig, Status,
                           backward_residual, fixed_point_solve, prepare, solve_linear,
                           solve_linear_step)


def test_config_validation():
    for bad in [dict(p=1.0), dict(rho=0.0), dict(tau=-1.0), dict(k=1, j=2), dict(k=2, j=0),
                dict(eps=0.0), dict(max_iters=0)]:
        with pytest.raises(ConfigError):
            SolverConfig(**bad)
    assert SolverConfig(k=1, j=1, tau=0.0).outside_theory
    assert not SolverConfig(k=1, j=1, tau=1.0).outside_theory
    assert SolverConfig(p=3).q == pytest.approx(1.5)


def test_zero_data_gives_zero():
    sol = fixed_point_solve(zero_problem(), build_structured_square(4), SolverConfig(k=1, j=0))
    assert sol.converged and not np.any(sol.u.coeffs) and not np.any(sol.lam.coeffs)


def test_backward_residual_small():
    sol = fixed_point_solve(get_problem("t1"), build_structured_square(8), SolverConfig(k=1, j=0))
    assert max(sol.log.residuals) <= 1e-10
    x = np.concatenate([sol.lam.coeffs, sol.u.coeffs])
    assert backward_residual(sol.system.matrix, x, sol.system.rhs) <= 1e-9


def test_tiny_system_against_dense_oracle():
    prob = ProblemSpec("tiny", "square", beta=_constvec(1.0, 1.0), div_beta=_const(0.0),
                       c=_const(0.0), g=lambda x, y: 1 + x + y, f_value=1.0, data_only=True)
    cfg = SolverConfig(p=2, k=1, j=0)
    disc, data = prepare(prob, build_structured_square(1), cfg)
    S = forms.assemble_s_tilde(data, forms.unit_weights(disc), 1.0, 0.0, 2.0)
    system = forms.build_saddle(S, forms.assemble_b(data), forms.assemble_rhs(data))
    lam, u, res = solve_linear_step(system, disc)
    dense = np.linalg.solve(system.matrix.toarray(), system.rhs)
    np.testing.assert_allclose(np.concatenate([lam.coeffs, u.coeffs]), dense, atol=1e-12)


def test_singular_matrix_detected():
    A = sp.csc_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(SingularSystemError):
        solve_linear(A, np.array([1.0, 2.0]))


def test_p2_takes_two_iterations():
    sol = fixed_point_solve(get_problem("t4"), build_structured_square(8), SolverConfig(p=2))
    assert sol.log.status is Status.CONVERGED
    assert sol.log.iterations == 2 and sol.log.updates[1] <= 1e-13


def test_p3_converges_with_settling_updates():
    cfg = SolverConfig(p=3, rho=1e4, k=2, j=1)
    sol = fixed_point_solve(get_problem("t4"), build_structured_square(8), cfg)
    assert sol.converged and sol.log.iterations < cfg.max_iters
    tail = np.array(sol.log.updates[-6:])
    assert np.all(np.diff(tail) < 0)


def test_dual_constraint_holds():
    sol = fixed_point_solve(get_problem("t6"), build_structured_square(8), SolverConfig(p=2))
    B = forms.assemble_b(sol.data)
    assert np.max(np.abs(B @ sol.lam.coeffs)) <= 1e-10 * max(1.0, np.max(np.abs(sol.system.rhs)))


def test_bitwise_determinism():
    cfg = SolverConfig(p=1.6, rho=10.0)
    a = fixed_point_solve(get_problem("t4"), build_structured_square(8), cfg)
    b = fixed_point_solve(get_problem("t4"), build_structured_square(8), cfg)
    assert np.array_equal(a.u.coeffs, b.u.coeffs) and np.array_equal(a.lam.coeffs, b.lam.coeffs)


def test_f1_multiplier_vanishes():
    sol = fixed_point_solve(get_problem("f1"), build_structured_square(8), SolverConfig(p=1.2))
    assert sol.converged and np.max(np.abs(sol.lam.coeffs)) <= 1e-6


def test_max_iters_reported():
    cfg = SolverConfig(p=3, rho=1e4, k=2, j=1, max_iters=2)
    sol = fixed_point_solve(get_problem("t4"), build_structured_square(8), cfg)
    assert sol.log.status is Status.MAX_ITERS and len(sol.log.updates) == 2 and not sol.converged
