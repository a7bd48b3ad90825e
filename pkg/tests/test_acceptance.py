"""The eleven acceptance criteria, each at its stated tolerance and time bound.

Every criterion records ``(passed, detail)`` in ``conftest.ACCEPTANCE``; the
terminal summary prints one line per criterion. Runs that produce a trace go
through ``run_experiment`` so that criterion 11 can rerun the same specs and
compare CSVs.
"""

import time

import numpy as np
import pytest

from faithful_newton.config import SolverConfig
from faithful_newton.fixtures import CONVEX, STRONGLY_CONVEX, fixture_info
from faithful_newton.harness import parse_config, run_experiment, strip_wall
from faithful_newton.oracle import FunctionOracle
from faithful_newton.problems import CrossEntropyProblem, make_synthetic, philox, random_quadratic
from faithful_newton.solvers import CONVERGED, MAX_ITER, fncr_ls, rate_checks
from faithful_newton.suites import (
    check_cr_properties,
    check_grade_termination,
    check_residual_envelope,
    cr_system_runs,
    linear_rate_config,
    no_backtrack_config,
    quadratic_phase_config,
)

from conftest import ACCEPTANCE

# criterion -> list of (spec, stripped CSV) produced on the first run
SPECS = {}


def record(n, ok, detail, elapsed, limit):
    within = elapsed < limit
    ACCEPTANCE[n] = (ok and within, f"{detail} [{elapsed:.2f}s / {limit:g}s]")
    assert ok, detail
    assert within, f"took {elapsed:.2f}s, limit {limit}s"


def timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def run_and_keep(n, spec):
    out = run_experiment(spec)
    SPECS.setdefault(n, []).append((spec, strip_wall(out.csv_text)))
    return out


# ---------------------------------------------------------------- 1, 4: CR systems

def test_criterion_01_cr_properties():
    runs, dt = timed(cr_system_runs)
    ok, detail = check_cr_properties(runs)
    conds = [r.kappa for r in runs]
    record(1, ok, f"{detail}; kappa range [{min(conds):.2g}, {max(conds):.2g}]", dt, 10)


def test_criterion_04_residual_envelope():
    runs = cr_system_runs()  # cached from criterion 1
    (ok, detail), dt = timed(lambda: check_residual_envelope(runs))
    record(4, ok, detail, dt, 5)


# ---------------------------------------------------------------- 2: exact Newton

QUAD_DIMS = (2, 5, 10, 20, 50, 100)
QUAD_CONDS = (1.0, 3.0, 10.0)


def quadratic_specs():
    for d in QUAD_DIMS:
        for cond in QUAD_CONDS:
            for seed in range(3):
                q = random_quadratic(seed, d, cond)
                x0 = philox(0).uniform(0.0, 1.0, d)
                g0 = float(np.linalg.norm(q.grad(x0)))
                yield q, x0, g0, parse_config(
                    problem="quadratic",
                    overrides={"dim": d, "cond": cond, "problem_seed": seed, "omega": 0.0,
                               "sigma": 0.0, "T": d, "T_max": d, "grad_tol": 1e-9 * g0})


def test_criterion_02_exact_newton():
    def body():
        worst_g = worst_step = 0.0
        bad = []
        for q, x0, g0, spec in quadratic_specs():
            out = run_and_keep(2, spec)
            res = out.result
            newton = -np.linalg.solve(q.A, q.grad(x0))
            step_err = np.linalg.norm((res.x - x0) - newton) / np.linalg.norm(newton)
            worst_g = max(worst_g, res.gnorm / g0)
            worst_step = max(worst_step, step_err)
            if res.n_iter != 1 or res.status != CONVERGED or res.gnorm > 1e-9 * g0 or step_err > 1e-8:
                bad.append((q.dim, spec.problem["cond"], spec.problem["problem_seed"], res.n_iter))
        n = len(QUAD_DIMS) * len(QUAD_CONDS) * 3
        return not bad, (f"{n} quadratics: worst ||g||/||g0||={worst_g:.1e}, "
                         f"worst step rel err={worst_step:.1e}" + (f"; failing {bad[:3]}" if bad else ""))

    (ok, detail), dt = timed(body)
    record(2, ok, detail, dt, 5)


# ---------------------------------------------------------------- 3: grade termination

def test_criterion_03_grade_termination():
    (ok, detail), dt = timed(check_grade_termination)
    record(3, ok, detail, dt, 5)


# ---------------------------------------------------------------- 5-7: rates on the fixtures

def test_criterion_05_linear_rate():
    def body():
        cfg = linear_rate_config()
        res = run_and_keep(5, STRONGLY_CONVEX.spec("fncr_ls", cfg)).result
        rep = rate_checks(res, fixture_info(STRONGLY_CONVEX.name), cfg, which=("linear",))
        return rep.passed and res.status == CONVERGED, f"status={res.status} k={res.n_iter}; {rep.summary()}"

    (ok, detail), dt = timed(body)
    record(5, ok, detail, dt, 60)


def test_criterion_06_quadratic_phase():
    def body():
        cfg = quadratic_phase_config()
        res = run_and_keep(6, STRONGLY_CONVEX.spec("fncr_ls", cfg)).result
        rep = rate_checks(res, fixture_info(STRONGLY_CONVEX.name), cfg, which=("quadratic",))
        return rep.passed and res.status == CONVERGED, f"status={res.status} k={res.n_iter}; {rep.summary()}"

    (ok, detail), dt = timed(body)
    record(6, ok, detail, dt, 60)


def test_criterion_07_no_backtracking():
    def body():
        cfg = no_backtrack_config()
        res = run_and_keep(7, CONVEX.spec("fncr_reg_ls", cfg)).result
        rep = rate_checks(res, fixture_info(CONVEX.name), cfg, which=("no_backtrack",))
        return rep.passed and res.status == CONVERGED, f"status={res.status} k={res.n_iter}; {rep.summary()}"

    (ok, detail), dt = timed(body)
    record(7, ok, detail, dt, 120)


# ---------------------------------------------------------------- 8: defaults end to end

def first_units_below(res, level):
    return next((r.oracle_units for r in res.trace if r.gnorm <= level), None)


def test_criterion_08_defaults_end_to_end():
    def body():
        notes, ok = [], True
        fncr_sc = None
        for fx in (STRONGLY_CONVEX, CONVEX):
            for solver in ("fncr_ls", "fncr_reg_ls"):
                res = run_and_keep(8, fx.spec(solver)).result
                f = res.f_history()
                good = (res.status == CONVERGED and res.gnorm <= 1e-6 and res.units <= 1e5
                        and all(b < a for a, b in zip(f, f[1:])))
                ok &= good
                notes.append(f"{solver}/{fx.name}: {res.units}u {'ok' if good else res.status}")
                if fx is STRONGLY_CONVEX and solver == "fncr_ls":
                    fncr_sc = res
        gd = run_and_keep(8, STRONGLY_CONVEX.spec("gd")).result
        for level in (1e-2, 1e-4):
            a, b = first_units_below(fncr_sc, level), first_units_below(gd, level)
            # a milestone GD never reaches within budget counts as GD using more units
            ok &= a is not None and (b is None or b > a)
            notes.append(f"||g||<={level:g}: fncr {a}u vs gd {b}u")
        return ok, "; ".join(notes)

    (ok, detail), dt = timed(body)
    record(8, ok, detail, dt, 120)


# ---------------------------------------------------------------- 9: oracle accounting

class Tally:
    """Independent call counts around a problem's raw callables."""

    def __init__(self, problem):
        self.f = self.g = self.h = 0
        self.problem = problem

    def oracle(self):
        p = self.problem

        def f(x):
            self.f += 1
            return p._f(x)

        def g(x):
            self.g += 1
            return p._grad(x)

        def h(x, v):
            self.h += 1
            return p._hvp(x, v)

        return FunctionOracle(f, g, h, p.dim)


def test_criterion_09_oracle_accounting():
    def body():
        notes, ok = [], True
        for solver, cfg in (("fncr_ls", SolverConfig(max_outer=3)),
                            ("fncr_reg_ls", SolverConfig(sigma=0.01, max_outer=3))):
            out = run_and_keep(9, STRONGLY_CONVEX.spec(solver, cfg))
            ok &= out.result.status == MAX_ITER and out.result.n_iter == 3
            # the gradient at x0 is evaluated before the first record
            prev_h, prev_g = 0, 1
            for rec in out.result.trace:
                ok &= rec.oracle_units == rec.f_evals + rec.grad_evals + 2 * rec.hvp_evals
                ok &= rec.hvp_evals - prev_h == rec.inner_t + 1
                ok &= rec.grad_evals - prev_g == 1
                prev_h, prev_g = rec.hvp_evals, rec.grad_evals
            # the same three iterations, counted by hand outside the library counter
            for k in (1, 2, 3):
                tally = Tally(STRONGLY_CONVEX.problem())
                res = fncr_ls(tally.oracle(), STRONGLY_CONVEX.x0(),
                              SolverConfig(sigma=cfg.sigma, max_outer=k))
                hand = tally.f + tally.g + 2 * tally.h
                ok &= res.trace[-1].oracle_units == hand == res.units
                ok &= res.trace[-1].hvp_evals == tally.h
                ok &= tally.h == sum(r.inner_t + 1 for r in res.trace)
            notes.append(f"{solver}: units={[r.oracle_units for r in out.result.trace]} "
                         f"inner_t={[r.inner_t for r in out.result.trace]}")
        return ok, "; ".join(notes)

    (ok, detail), dt = timed(body)
    record(9, ok, detail, dt, 1)


# ---------------------------------------------------------------- 10: finite differences

def fd_problems():
    yield "quadratic", random_quadratic(3, 20, cond=100.0)
    yield STRONGLY_CONVEX.name, STRONGLY_CONVEX.problem()
    yield CONVEX.name, CONVEX.problem()
    yield "multiclass", CrossEntropyProblem(make_synthetic(5, 60, 6, 4, 1.0), 0.05)


def fd_errors(p, x, v, h=1e-6):
    g = p.grad(x)
    e = np.eye(p.dim)
    fd_g = np.array([(p.f(x + h * e[i]) - p.f(x - h * e[i])) / (2 * h) for i in range(p.dim)])
    Hv = p.hvp(x, v)
    fd_Hv = (p.grad(x + h * v) - p.grad(x - h * v)) / (2 * h)
    return (np.linalg.norm(fd_g - g) / np.linalg.norm(g),
            np.linalg.norm(fd_Hv - Hv) / np.linalg.norm(Hv))


def test_criterion_10_finite_differences():
    def body():
        ok, notes = True, []
        for name, p in fd_problems():
            rng = philox(2024)
            wg = wh = 0.0
            for _ in range(50):
                x = rng.standard_normal(p.dim)
                v = rng.standard_normal(p.dim)
                v /= np.linalg.norm(v)
                eg, eh = fd_errors(p, x, v)
                wg, wh = max(wg, eg), max(wh, eh)
            ok &= wg <= 1e-5 and wh <= 1e-4
            notes.append(f"{name}: grad {wg:.1e} hvp {wh:.1e}")
        return ok, "; ".join(notes)

    (ok, detail), dt = timed(body)
    record(10, ok, detail, dt, 10)


# ---------------------------------------------------------------- 11: determinism

def test_criterion_11_determinism():
    needed = {2, 5, 6, 7, 8, 9}
    if not needed <= set(SPECS):
        pytest.skip("needs the trace-producing criteria to have run first in this session")

    def body():
        mismatched = []
        n_specs = 0
        for n in sorted(SPECS):
            for spec, text in SPECS[n]:
                n_specs += 1
                if strip_wall(run_experiment(spec, write=False).csv_text) != text:
                    mismatched.append(n)
        # the CR suite behind criteria 1 and 4, recomputed without its cache
        a = [(r.seed, r.rel_residuals) for r in cr_system_runs()]
        b = [(r.seed, r.rel_residuals) for r in cr_system_runs.__wrapped__()]
        if a != b:
            mismatched.append(1)
        ok3 = check_grade_termination()[1] == check_grade_termination()[1]
        if not ok3:
            mismatched.append(3)
        detail = f"{n_specs} trace specs + CR systems + grade cases rerun"
        if mismatched:
            detail += f"; differing criteria {sorted(set(mismatched))}"
        return not mismatched, detail

    (ok, detail), dt = timed(body)
    record(11, ok, detail, dt, 60)
