"""Registered property suites behind ``faithful-newton suite <name>``.

CR property checks run the library's own CR in 320-bit binary floating point
(gmpy2 ``mpfr`` scalars in numpy object arrays). Most of those properties are
exact-arithmetic statements: in float64 the Krylov vectors lose
orthogonality after a handful of steps on ill-conditioned systems, which
breaks strict monotonicity at the ulp level and delays finite termination.
At 320 bits the same code keeps every property on all seeded systems.
"""

import functools
import math
import time
from dataclasses import dataclass, field

import gmpy2
import numpy as np

from .config import SolverConfig
from .cr import cr_solve, numerical_grade, verify_cr_properties
from .fixtures import CONVEX, STRONGLY_CONVEX, fixture_info
from .line_search import eta_floor
from .problems import philox, random_spd, spd_spectrum
from .solvers import fncr_ls, rate_checks

MP_PRECISION = 320


@dataclass
class SuiteCheck:
    name: str
    passed: bool
    detail: str = ""
    seconds: float = 0.0


@dataclass
class SuiteReport:
    name: str
    checks: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def lines(self):
        return [f"{'PASS' if c.passed else 'FAIL'} {self.name}/{c.name} ({c.seconds:.2f}s) {c.detail}"
                for c in self.checks]


def _timed(name, fn):
    t0 = time.perf_counter()
    passed, detail = fn()
    return SuiteCheck(name, bool(passed), detail, time.perf_counter() - t0)


def to_mp(a):
    """Elementwise ``mpfr`` copy (exact for float64 input)."""
    return np.vectorize(gmpy2.mpfr, otypes=[object])(np.asarray(a, dtype=np.float64))


# ---------------------------------------------------------------- CR systems

@dataclass
class CrSystemRun:
    seed: int
    cond: float
    kappa: float          # from the dense eigendecomposition
    grade: int
    report: object        # CrPropertyReport
    rel_residuals: list   # ||r_t|| / ||g|| for t = 0..t_final (floats)


@functools.lru_cache(maxsize=4)
def cr_system_runs(n=1000, d=20, log10_cond_max=6.0, precision=MP_PRECISION, seed0=0):
    """CR on ``n`` seeded random SPD systems with condition numbers ``10**U[0, max]``."""
    runs = []
    ctx = gmpy2.get_context().copy()
    ctx.precision = precision
    with gmpy2.context(ctx):
        for i in range(n):
            rng = philox(seed0 + i)
            cond = 10.0 ** rng.uniform(0.0, log10_cond_max)
            H = random_spd(rng, d, cond)
            g = rng.standard_normal(d)
            Hm = to_mp(H)
            _, _, _, st = cr_solve(lambda v: Hm @ v, to_mp(g), tol=1e-30, max_iter=d, record=True)
            ev = np.linalg.eigvalsh(H)
            rep = verify_cr_properties(st, Hm, lam=(ev[0], ev[-1]))
            rel = [float(r / st.gnorm) for r in st.rnorm_hist]
            runs.append(CrSystemRun(seed0 + i, cond, ev[-1] / ev[0], numerical_grade(st), rep, rel))
    return tuple(runs)


def check_cr_properties(runs):
    bad = [(r.seed, c.name, c.worst_margin) for r in runs for c in r.report.failures()]
    detail = f"{len(runs)} systems, {len(bad)} failing checks"
    if bad:
        detail += f"; first: seed={bad[0][0]} {bad[0][1]} margin={bad[0][2]:.3e}"
    return not bad, detail


def check_residual_envelope(runs):
    """``||r_t||/||g|| <= 2 q^t`` with ``q = (sqrt(k)-1)/(sqrt(k)+1)`` at every ``t``."""
    worst = -math.inf
    worst_at = None
    for r in runs:
        sk = math.sqrt(r.kappa)
        q = (sk - 1.0) / (sk + 1.0)
        for t, rel in enumerate(r.rel_residuals):
            bound = 2.0 * q**t
            ratio = rel / bound if bound > 0 else (math.inf if rel > 0 else 0.0)
            if ratio > worst:
                worst, worst_at = ratio, (r.seed, t)
    return worst <= 1.0, f"max ratio to bound {worst:.3e} at (seed, t)={worst_at}"


def householder_spd(rng, lam, to_scalar=float, n_reflectors=3):
    """``Q diag(lam) Q^T`` with ``Q`` a product of random Householder reflectors,
    formed in the scalar type ``to_scalar`` (e.g. ``gmpy2.mpfr``).

    Reflectors are orthogonal to working precision, so the eigenvalues (and
    their multiplicities) are exact up to that precision.
    """
    d = len(lam)
    conv = np.vectorize(to_scalar, otypes=[object])
    M = conv(np.diag(np.asarray(lam, dtype=np.float64)))
    for _ in range(n_reflectors):
        v = conv(rng.standard_normal(d))
        vv = np.dot(v, v)
        # M <- P M P with P = I - 2 v v^T / (v^T v)
        Mv = M @ v
        M = M - np.outer(v, Mv) * (2 / vv)
        Mv = M @ v
        M = M - np.outer(Mv, v) * (2 / vv)
    return M


def grade_termination_cases(n=200, d_max=30, seed0=10_000, log10_cond_max=6.0, mp=False):
    """Seeded ``(seed, k, H, g)`` with exactly ``k`` distinct eigenvalues.

    With ``mp=True``, ``H`` and ``g`` are 320-bit ``mpfr`` arrays built by
    :func:`householder_spd`; otherwise float64 from :func:`random_spd`.
    """
    for i in range(n):
        rng = philox(seed0 + i)
        d = int(rng.integers(2, d_max + 1))
        k = int(rng.integers(1, d + 1))
        cond = 10.0 ** rng.uniform(0.0, log10_cond_max)
        if mp:
            H = householder_spd(rng, spd_spectrum(rng, d, cond, distinct=k), gmpy2.mpfr)
            g = to_mp(rng.standard_normal(d))
        else:
            H = random_spd(rng, d, cond, distinct=k)
            g = rng.standard_normal(d)
        yield seed0 + i, k, H, g


def check_grade_termination(n=200, precision=MP_PRECISION, float64_log10_cond_max=1.0):
    """CR with ``tol = 0`` stops within ``k`` steps at ``||r|| <= 1e-8 ||g||`` for
    matrices with ``k`` distinct eigenvalues.

    Run (a) in 320-bit arithmetic on matrices assembled at that precision, for
    condition numbers up to 1e6, and (b) in float64 for condition numbers up
    to ``10**float64_log10_cond_max``. (Rounding a matrix to float64 splits
    every repeated eigenvalue into a cluster of width ~1e-16 ||H||, which the
    degree-k residual polynomial amplifies once the spectrum is wide.) The
    residual is recomputed explicitly as ``||H s + g||``.
    """
    worst_mp = worst_64 = 0.0
    ctx = gmpy2.get_context().copy()
    ctx.precision = precision
    with gmpy2.context(ctx):
        for seed, k, H, g in grade_termination_cases(n, mp=True):
            s, _, t, _ = cr_solve(lambda v: H @ v, g, tol=0.0, max_iter=k)
            res = H @ s + g
            rel = float(gmpy2.sqrt(np.dot(res, res)) / gmpy2.sqrt(np.dot(g, g)))
            worst_mp = max(worst_mp, rel)
    for seed, k, H, g in grade_termination_cases(n, seed0=20_000, log10_cond_max=float64_log10_cond_max):
        s, _, t, _ = cr_solve(lambda v: H @ v, g, tol=0.0, max_iter=k)
        worst_64 = max(worst_64, np.linalg.norm(H @ s + g) / np.linalg.norm(g))
    ok = worst_mp <= 1e-8 and worst_64 <= 1e-8
    return ok, f"worst ||Hs+g||/||g||: {worst_mp:.2e} (320-bit), {worst_64:.2e} (float64)"


# ---------------------------------------------------------------- lemma bounds

def check_alpha_diag12():
    H = np.diag([1.0, 2.0])
    _, _, _, st = cr_solve(lambda v: H @ v, np.array([1.0, 1.0]), max_iter=2, record=True)
    a0 = st.alpha_hist[0]
    rep = verify_cr_properties(st, H, lam=(1.0, 2.0))
    ok = abs(a0 - 0.6) <= 1e-15 and 0.5 <= a0 <= 1.0 and rep["alpha_bounds"].passed
    return ok, f"alpha_0={a0!r} in [0.5, 1]"


def check_alpha_identity():
    H = np.eye(3)
    _, _, _, st = cr_solve(lambda v: H @ v, np.array([3.0, 4.0, 0.0]), max_iter=1, record=True)
    a0 = st.alpha_hist[0]
    return a0 == 1.0, f"alpha_0={a0!r} (= 1/lmin = 1/lmax)"


def check_step_floor():
    """Accepted steps on the strongly convex fixture stay above the analytic floor."""
    fx = STRONGLY_CONVEX
    info = fixture_info(fx.name)
    cfg = SolverConfig()
    res = fncr_ls(fx.problem(), fx.x0(), cfg)
    worst = math.inf
    for rec in res.trace:
        floor = eta_floor(rec.gs, fx.mu * 2.0, 1.1 * info.LH_est, cfg.ls_rho, cfg.zeta)
        worst = min(worst, rec.eta - floor)
    return worst >= 0.0 and res.status == "Converged", f"min(eta - floor) = {worst:.3e}"


# ---------------------------------------------------------------- rate runs

def linear_rate_config():
    """Strongly convex fixture: ``omega = sqrt(1/(2 kappa))`` and
    ``T = ceil(sqrt(kappa) ln(8 kappa) / 4)`` from the estimated condition number."""
    k = fixture_info(STRONGLY_CONVEX.name).kappa_est
    T = math.ceil(math.sqrt(k) * math.log(8.0 * k) / 4.0)
    return SolverConfig(omega=math.sqrt(1.0 / (2.0 * k)), T=T, T_max=max(T, 1000))


def quadratic_phase_config(rho=0.4):
    """Strongly convex fixture, ``rho`` in (1/3, 1/2) for both sufficiency and line
    search, exact inner solves (``omega = 0``, ``T = T_max = dim``)."""
    dim = STRONGLY_CONVEX.dim
    return SolverConfig(rho=rho, ls_rho=rho, omega=0.0, T=dim, T_max=dim)


def no_backtrack_config():
    """Convex fixture: ``sigma = sqrt(LH/2)``, ``rho = 1/6``, ``omega = 0``,
    ``T = T_max = min(dim, 400)``."""
    LH = fixture_info(CONVEX.name).LH_est
    T = min(CONVEX.dim, 400)
    return SolverConfig(sigma=math.sqrt(LH / 2.0), rho=1 / 6, ls_rho=1 / 6, omega=0.0, T=T, T_max=T)


def linear_rate_run():
    fx, cfg = STRONGLY_CONVEX, linear_rate_config()
    res = fncr_ls(fx.problem(), fx.x0(), cfg, f_star=fx.f_star_ref)
    return res, rate_checks(res, fixture_info(fx.name), cfg, which=("linear",)), cfg


def quadratic_phase_run(rho=0.4):
    fx, cfg = STRONGLY_CONVEX, quadratic_phase_config(rho)
    res = fncr_ls(fx.problem(), fx.x0(), cfg)
    return res, rate_checks(res, fixture_info(fx.name), cfg, which=("quadratic",)), cfg


def no_backtrack_run():
    fx, cfg = CONVEX, no_backtrack_config()
    res = fncr_ls(fx.problem(), fx.x0(), cfg)
    return res, rate_checks(res, fixture_info(fx.name), cfg, which=("no_backtrack",)), cfg


def _rate_check(run):
    def fn():
        res, rep, _ = run()
        ok = rep.passed and res.status == "Converged"
        return ok, f"status={res.status} iterations={res.n_iter}; {rep.summary()}"
    return fn


# ---------------------------------------------------------------- registry

def suite_cr_properties():
    rep = SuiteReport("cr_properties")
    box = {}

    def props():
        box["runs"] = cr_system_runs()
        return check_cr_properties(box["runs"])

    rep.checks.append(_timed("property_checks", props))
    rep.checks.append(_timed("residual_envelope", lambda: check_residual_envelope(box["runs"])))
    rep.checks.append(_timed("grade_termination", check_grade_termination))
    return rep


def suite_lemma_bounds():
    rep = SuiteReport("lemma_bounds")
    rep.checks.append(_timed("alpha_bounds_diag12", check_alpha_diag12))
    rep.checks.append(_timed("alpha_identity", check_alpha_identity))
    rep.checks.append(_timed("step_size_floor", check_step_floor))
    return rep


def suite_rate_checks():
    rep = SuiteReport("rate_checks")
    rep.checks.append(_timed("linear_rate", _rate_check(linear_rate_run)))
    rep.checks.append(_timed("quadratic_phase", _rate_check(quadratic_phase_run)))
    rep.checks.append(_timed("no_backtracking", _rate_check(no_backtrack_run)))
    return rep


SUITES = {
    "cr_properties": suite_cr_properties,
    "lemma_bounds": suite_lemma_bounds,
    "rate_checks": suite_rate_checks,
}


def run_suite(name):
    """Run one suite (or ``all``) and return the list of reports."""
    if name == "all":
        return [fn() for fn in SUITES.values()]
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES) + ['all']}")
    return [SUITES[name]()]
