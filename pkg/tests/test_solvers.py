import math

import numpy as np
import pytest

from faithful_newton.config import SolverConfig
from faithful_newton.exceptions import ConfigError
from faithful_newton.fixtures import STRONGLY_CONVEX
from faithful_newton.problems import ProblemInfo, QuadraticProblem, philox, random_quadratic
from faithful_newton.solvers import (
    BUDGET,
    CONVERGED,
    SOLVER_ERROR,
    cg_solve,
    fncr_ls,
    fncr_reg_ls,
    gd_ls,
    local_radius,
    newton_cg_ls,
    rate_checks,
)

from conftest import unit_quadratic


def diag12():
    return QuadraticProblem(np.diag([1.0, 2.0]), np.array([1.0, 1.0]))


# ---------------------------------------------------------------- config

def test_config_defaults():
    c = SolverConfig()
    assert (c.rho, c.omega, c.T, c.T_max, c.zeta, c.eta0, c.sigma) == (0.01, 0.0, 5, 1000, 0.5, 1.0, 0.0)
    assert (c.grad_tol, c.oracle_budget, c.check_window, c.ls_rho) == (1e-6, 1e5, 20, 1e-4)


@pytest.mark.parametrize("kw", [{"rho": 0.7}, {"rho": 0.0}, {"omega": 1.0}, {"T": 0},
                                {"T": 10, "T_max": 5}, {"zeta": 1.0}, {"eta0": 0.0},
                                {"sigma": -1.0}, {"theta": -1.0}, {"ls_rho": 0.5},
                                {"check_window": 0}, {"T": 2.5}])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        SolverConfig(**kw)


def test_theta_schedule():
    c = SolverConfig(theta=3.0, T_max=50)
    assert c.inner_T(4.0, 100) == (3, 50)       # ||g|| >= 1: T = theta
    assert c.inner_T(0.01, 100) == (30, 50)     # ceil(3 / 0.1)
    assert c.inner_T(1e-8, 100) == (50, 50)     # clamped to T_max
    assert c.inner_T(1e-8, 20) == (20, 20)      # and to the dimension


def test_kappa_schedule():
    c = SolverConfig(kappa=100.0, T_max=50)
    # ceil(10 * ln(2 / 1e-3) / 4) = ceil(19.0...) = 20
    assert c.inner_T(1e-3, 100) == (20, 50)
    assert c.inner_T(4.0, 100) == (1, 50)       # ln(1/2) < 0: at least one step
    assert c.inner_T(1e-30, 100) == (50, 50)
    assert c.inner_omega(1e-3) == 1e-3 and c.inner_omega(3.0) == 0.5
    assert SolverConfig(omega=0.2).inner_omega(1e-3) == 0.2
    with pytest.raises(ConfigError):
        SolverConfig(kappa=2.0, theta=1.0)
    with pytest.raises(ConfigError):
        SolverConfig(kappa=0.5)


def test_kappa_schedule_run_on_fixture():
    from faithful_newton.fixtures import fixture_info

    k = fixture_info(STRONGLY_CONVEX.name).kappa_est
    res = fncr_ls(STRONGLY_CONVEX.problem(), STRONGLY_CONVEX.x0(), SolverConfig(kappa=k))
    assert res.status == CONVERGED
    f = res.f_history()
    assert all(b < a for a, b in zip(f, f[1:]))


# ---------------------------------------------------------------- fncr_ls

def test_fncr_exact_newton_on_diag12():
    res = fncr_ls(diag12(), np.zeros(2), SolverConfig(omega=0.0, T=2, T_max=2))
    assert res.status == CONVERGED and res.n_iter == 1
    np.testing.assert_allclose(res.x, [1.0, 0.5], rtol=1e-14)
    assert res.gnorm <= 1e-10


def test_fncr_on_fixture_with_defaults():
    res = fncr_ls(STRONGLY_CONVEX.problem(), STRONGLY_CONVEX.x0(), SolverConfig())
    assert res.status == CONVERGED and res.gnorm <= 1e-6 and res.units <= 1e5


def test_zero_gradient_start():
    for solver in (fncr_ls, newton_cg_ls, gd_ls):
        res = solver(diag12(), np.array([1.0, 0.5]))
        assert res.status == CONVERGED and res.trace == []


def test_fncr_reg_requires_sigma():
    with pytest.raises(ValueError):
        fncr_reg_ls(diag12(), np.zeros(2), SolverConfig())
    res = fncr_reg_ls(diag12(), np.zeros(2))
    assert res.solver == "fncr_reg_ls" and res.status == CONVERGED
    assert all(r.shift > 0 for r in res.trace)


def test_budget_exhausted():
    res = fncr_ls(STRONGLY_CONVEX.problem(), STRONGLY_CONVEX.x0(), SolverConfig(oracle_budget=10))
    assert res.status == BUDGET
    # at most one iteration past the budget
    assert sum(r.oracle_units > 10 for r in res.trace) <= 1


def test_solver_error_is_reported_with_trace():
    # indefinite quadratic via a raw oracle: CR sees negative curvature
    from faithful_newton.oracle import FunctionOracle

    o = FunctionOracle(lambda x: 0.5 * (x[0] ** 2 - x[1] ** 2), lambda x: np.array([x[0], -x[1]]),
                       lambda x, v: np.array([v[0], -v[1]]), 2)
    res = fncr_ls(o, np.array([1.0, 1.0]), SolverConfig(T=2, T_max=2))
    assert res.status == SOLVER_ERROR and "OperatorNotPD" in res.error


def test_t_max_one_is_cr_scaled_gd():
    q = random_quadratic(4, 8, cond=20.0)
    x0 = philox(5).standard_normal(8)
    res = fncr_ls(q, x0, SolverConfig(T=1, T_max=1, max_outer=5), record_x=True)
    for k, rec in enumerate(res.trace):
        x = res.iterates[k]
        g = q.grad(x)
        Hg = q.A @ g
        alpha0 = (g @ Hg) / (Hg @ Hg)
        ref = gd_ls(q, x, SolverConfig(eta0=alpha0, max_outer=1))
        np.testing.assert_allclose(res.iterates[k + 1], ref.x, rtol=1e-13, atol=1e-15)


# ---------------------------------------------------------------- baselines

def test_cg_identity_one_step():
    d, t, _ = cg_solve(lambda v: v, np.array([1.0, 2.0]), 0.0, 2)
    assert t == 1
    np.testing.assert_array_equal(d, [-1.0, -2.0])


def test_newton_cg_exact_at_grade():
    q = random_quadratic(2, 10, cond=10.0)
    res = newton_cg_ls(q, np.zeros(10), SolverConfig(omega=0.0, T_max=10))
    assert res.n_iter == 1
    np.testing.assert_allclose(res.x, q.known_solution, rtol=1e-8)


def test_newton_cg_on_fixture_trace_schema_matches():
    a = fncr_ls(STRONGLY_CONVEX.problem(), STRONGLY_CONVEX.x0())
    b = newton_cg_ls(STRONGLY_CONVEX.problem(), STRONGLY_CONVEX.x0())
    assert b.status == CONVERGED
    assert type(a.trace[0]) is type(b.trace[0])


def test_gd_first_step_unit_quadratic():
    o = unit_quadratic(2)
    res = gd_ls(o, np.array([1.0, 0.0]), SolverConfig(eta0=0.01, max_outer=1))
    np.testing.assert_allclose(res.x, [0.99, 0.0], rtol=1e-15)
    assert res.trace[0].ls_backtracks == 0


def test_gd_monotone_on_fixture():
    res = gd_ls(STRONGLY_CONVEX.problem(), STRONGLY_CONVEX.x0(), SolverConfig(eta0=0.01, oracle_budget=3000))
    f = res.f_history()
    assert all(b < a for a, b in zip(f, f[1:]))


# ---------------------------------------------------------------- diagnostics

def test_local_radius_examples():
    assert local_radius(1.0, 3.0, 1 / 3) == pytest.approx(1 / 3, rel=1e-15)
    assert local_radius(1.0, 3.0, 0.5 - 1e-12) < 1e-11
    assert local_radius(1.0, 0.0, 0.4) == math.inf
    with pytest.raises(ValueError):
        local_radius(1.0, 1.0, 0.5)


def test_rate_checks_vacuous_on_quadratic():
    res = fncr_ls(diag12(), np.zeros(2), SolverConfig(omega=0.0, T=2, T_max=2, rho=0.4, ls_rho=0.4))
    info = ProblemInfo(1.0, 2.0, 0.0, f_star_ref=diag12().f_star)
    rep = rate_checks(res, info, SolverConfig(rho=0.4))
    assert rep.passed, rep.failures()
    assert res.trace[-1].gnorm <= 1e-12


def test_rate_checks_flag_violations():
    res = fncr_ls(STRONGLY_CONVEX.problem(), STRONGLY_CONVEX.x0())
    # an absurdly small LH makes every iterate "local" and the envelope unattainable
    info = ProblemInfo(0.1, 600.0, 1e-12, f_star_ref=STRONGLY_CONVEX.f_star_ref)
    assert not rate_checks(res, info, SolverConfig(rho=0.4), which=("quadratic",)).passed
