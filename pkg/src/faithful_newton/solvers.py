"""Outer optimization loops and convergence-rate diagnostics.

All loops share one skeleton: evaluate ``f`` and ``g`` at ``x0``, then
repeat {stop on ``||g|| <= grad_tol`` or exhausted budget; build a direction;
backtrack; move; evaluate the new gradient; log a :class:`TraceRecord`}.
Only the direction differs:

* :func:`fncr_ls` -- CR with sufficiency checks on ``H`` (``sigma = 0``) or on
  ``H + sigma*sqrt(||g||) I`` (``sigma > 0``);
* :func:`newton_cg_ls` -- plain CG to relative residual ``omega``;
* :func:`gd_ls` -- the negative gradient.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .config import SolverConfig
from .exceptions import FNCRError, OperatorNotPD, ZeroGradient
from .inner import fn_cr_solve
from .line_search import backtrack
from .oracle import RegularizedOracle, as_vec, dot, norm

CONVERGED = "Converged"
BUDGET = "BudgetExhausted"
MAX_ITER = "MaxIterations"
SOLVER_ERROR = "SolverError"


@dataclass
class TraceRecord:
    k: int
    f: float
    gnorm: float
    delta: float          # f - f_star, None without a reference value
    oracle_units: int
    wall_ns: int
    dtype: str            # SUF | INS | TER | n/a
    eta: float
    inner_t: int
    ls_backtracks: int
    f_evals: int = 0      # cumulative raw counts, kept for accounting checks
    grad_evals: int = 0
    hvp_evals: int = 0
    gs: float = None      # <g_k, d_k> of the direction handed to the line search
    shift: float = 0.0    # regularization shift used by the inner solve


@dataclass
class SolverResult:
    solver: str
    x: np.ndarray
    status: str
    f0: float
    gnorm0: float
    trace: list = field(default_factory=list)
    units: int = 0
    error: str = None
    iterates: list = None   # x_0, x_1, ... when requested with record_x=True
    exception: Exception = None

    @property
    def n_iter(self):
        return len(self.trace)

    @property
    def f(self):
        return self.trace[-1].f if self.trace else self.f0

    @property
    def gnorm(self):
        return self.trace[-1].gnorm if self.trace else self.gnorm0

    @property
    def ins_count(self):
        return sum(1 for r in self.trace if r.dtype == "INS")

    def f_history(self):
        return [self.f0] + [r.f for r in self.trace]

    def gnorm_history(self):
        return [self.gnorm0] + [r.gnorm for r in self.trace]


def _run(name, oracle, x0, cfg, direction, f_star=None, record_x=False, shift=lambda: 0.0):
    """Shared outer loop. ``direction(x, g, gnorm, fx)`` returns
    ``(d, dtype, inner_t, f_at_d)`` where ``f_at_d`` is ``f(x + d)`` if known."""
    counter = oracle.counter
    start = time.perf_counter_ns()
    eta0 = cfg.eta0
    x = as_vec(x0)
    fx = oracle.f(x)
    g = oracle.grad(x)
    gnorm = norm(g)
    res = SolverResult(name, x, None, fx, gnorm, iterates=[x] if record_x else None)
    try:
        while True:
            if gnorm <= cfg.grad_tol:
                res.status = CONVERGED
                break
            if counter.units > cfg.oracle_budget:
                res.status = BUDGET
                break
            if res.n_iter >= cfg.max_outer:
                res.status = MAX_ITER
                break
            d, dtype, inner_t, f_at_d = direction(x, g, gnorm, fx)
            g_prev = g
            ls = backtrack(oracle, x, fx, g, d, rho=cfg.ls_rho, zeta=cfg.zeta, eta0=eta0,
                           j_max=cfg.j_max, f_first=f_at_d if eta0 == 1.0 else None)
            x = as_vec(x + ls.accepted)
            fx = ls.f_new
            g = oracle.grad(x)
            gnorm = norm(g)
            res.x = x
            if record_x:
                res.iterates.append(x)
            res.trace.append(TraceRecord(
                k=res.n_iter + 1, f=fx, gnorm=gnorm,
                delta=None if f_star is None else fx - f_star,
                oracle_units=counter.units, wall_ns=time.perf_counter_ns() - start,
                dtype=str(dtype), eta=ls.eta, inner_t=inner_t, ls_backtracks=ls.j,
                f_evals=counter.f_evals, grad_evals=counter.grad_evals,
                hvp_evals=counter.hvp_evals, gs=dot(g_prev, d), shift=shift(),
            ))
    except FNCRError as exc:
        res.status = SOLVER_ERROR
        res.error = f"{type(exc).__name__}: {exc}"
        res.exception = exc
    res.units = counter.units
    return res


def fncr_ls(oracle, x0, cfg=None, f_star=None, record_x=False):
    """Faithful-Newton CR with line search; ``cfg.sigma > 0`` selects the
    gradient-regularized operator."""
    cfg = SolverConfig() if cfg is None else cfg
    if cfg.sigma > 0:
        op = RegularizedOracle(oracle, "gradient_reg", cfg.sigma)
        name = "fncr_reg_ls"
    else:
        op, name = oracle, "fncr_ls"
    dim = oracle.dim

    def direction(x, g, gnorm, fx):
        if cfg.sigma > 0:
            op.freeze(x, gnorm)
        T, T_max = cfg.inner_T(gnorm, dim if dim is not None else len(g))
        inner = fn_cr_solve(op, x, g, fx, cfg, T=T, T_max=T_max, omega=cfg.inner_omega(gnorm))
        return inner.direction, inner.dtype, inner.t_used, inner.f_new

    return _run(name, oracle, x0, cfg, direction, f_star, record_x,
                shift=(lambda: op.shift) if cfg.sigma > 0 else (lambda: 0.0))


def fncr_reg_ls(oracle, x0, cfg=None, f_star=None, record_x=False):
    cfg = SolverConfig(sigma=0.01) if cfg is None else cfg
    if not cfg.sigma > 0:
        raise ValueError("the regularized variant needs sigma > 0")
    return fncr_ls(oracle, x0, cfg, f_star, record_x)


def cg_solve(hvp, g, tol, max_iter):
    """Conjugate gradients for ``H d = -g`` from ``d = 0``; one product per step.

    Returns ``(d, t, rnorm)``. Non-positive curvature raises OperatorNotPD.
    """
    gnorm = norm(g)
    if gnorm == 0.0:
        raise ZeroGradient("CG needs a nonzero right-hand side")
    d = np.zeros_like(g)
    r = -g
    p = r.copy()
    rr = dot(r, r)
    t = 0
    while math.sqrt(rr) > tol * gnorm and t < max_iter:
        Hp = hvp(p)
        pHp = dot(p, Hp)
        if not pHp > 0.0:
            raise OperatorNotPD(f"<p, Hp> = {pHp:.3e} at CG step {t}")
        a = rr / pHp
        d = d + a * p
        r = r - a * Hp
        rr_new = dot(r, r)
        p = r + (rr_new / rr) * p
        rr = rr_new
        t += 1
    return d, t, math.sqrt(rr)


def newton_cg_ls(oracle, x0, cfg=None, f_star=None, record_x=False):
    """Inexact Newton with CG to ``||r|| <= omega ||g||`` (capped at ``T_max``)."""
    cfg = SolverConfig(omega=0.1) if cfg is None else cfg

    def direction(x, g, gnorm, fx):
        d, t, _ = cg_solve(lambda v: oracle.hvp(x, v), g, cfg.omega, min(cfg.T_max, len(g)))
        return d, "n/a", t, None

    return _run("newton_cg", oracle, x0, cfg, direction, f_star, record_x)


def gd_ls(oracle, x0, cfg=None, f_star=None, record_x=False):
    """Gradient descent, backtracking from ``cfg.eta0`` (0.01 by default here)."""
    cfg = SolverConfig(eta0=0.01) if cfg is None else cfg

    def direction(x, g, gnorm, fx):
        return -g, "n/a", 0, None

    return _run("gd", oracle, x0, cfg, direction, f_star, record_x)


SOLVERS = {
    "fncr_ls": fncr_ls,
    "fncr_reg_ls": fncr_reg_ls,
    "newton_cg": newton_cg_ls,
    "gd": gd_ls,
}


# ---------------------------------------------------------------- diagnostics

def local_radius(mu, LH, rho):
    """Gradient-norm radius ``3 (1 - 2 rho) mu^2 / LH`` of the quadratic phase
    (infinite when ``LH = 0``)."""
    if not 0.0 < rho < 0.5:
        raise ValueError("rho must lie in (0, 1/2)")
    if mu <= 0:
        raise ValueError("mu must be positive")
    if LH <= 0.0:
        return math.inf
    return 3.0 * (1.0 - 2.0 * rho) * mu * mu / LH


@dataclass
class RateCheck:
    name: str
    passed: bool
    worst_margin: float
    n_checked: int
    detail: str = ""


@dataclass
class RateReport:
    checks: list

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def summary(self):
        return "; ".join(f"{c.name}: n={c.n_checked} worst margin={c.worst_margin:.3e}"
                         for c in self.checks)


def _margin_check(name, pairs, detail=""):
    """``pairs`` of (lhs, rhs): passes iff lhs <= rhs for all (margin rhs - lhs)."""
    margins = [rhs - lhs for lhs, rhs in pairs]
    worst = min(margins) if margins else math.inf
    return RateCheck(name, worst >= 0.0, worst, len(margins), detail)


def rate_checks(result, info, cfg, which=("linear", "quadratic", "no_backtrack"), slack=0.1):
    """Verify per-iteration convergence envelopes on a finished run.

    * ``linear``: ``delta_k <= (1 + slack/2) delta_0 / (1 + rho)^(k/2)``
      (needs ``info.f_star_ref``);
    * ``quadratic``: for every ``k`` with ``||g_k|| <= r / (1 + slack)``,
      ``||g_{k+1}|| <= (1 + slack)(LH/mu^2)||g_k||^2`` plus a round-off floor
      of ``1e-12 ||g_0||``;
    * ``no_backtrack``: zero backtracks and
      ``f_k - f_{k+1} > (1 - slack) (2 rho / sqrt(2 LH)) ||g_k||^1.5``.

    ``rho`` is ``cfg.rho``; ``mu``/``LH`` come from ``info``.
    """
    fs = result.f_history()
    gs = result.gnorm_history()
    rho = cfg.rho
    out = []
    if "linear" in which:
        if info.f_star_ref is None:
            out.append(RateCheck("linear", False, -math.inf, 0, "no f_star_ref"))
        else:
            d0 = fs[0] - info.f_star_ref
            pairs = [(f - info.f_star_ref, (1 + slack / 2) * d0 / (1 + rho) ** (k / 2))
                     for k, f in enumerate(fs)]
            out.append(_margin_check("linear", pairs))
    if "quadratic" in which:
        r = local_radius(info.mu_est, info.LH_est, rho) / (1 + slack)
        coef = (1 + slack) * info.LH_est / info.mu_est**2
        floor = 1e-12 * gs[0]
        pairs = [(gs[k + 1], coef * gs[k] ** 2 + floor)
                 for k in range(len(gs) - 1) if gs[k] <= r]
        out.append(_margin_check("quadratic", pairs, f"radius={r:.6g}"))
    if "no_backtrack" in which:
        bt = [(rec.ls_backtracks, 0) for rec in result.trace]
        out.append(_margin_check("zero_backtracks", bt))
        LH = info.LH_est
        if LH > 0:
            c = (1 - slack) * 2 * rho / math.sqrt(2 * LH)
            pairs = [(c * gs[k] ** 1.5, fs[k] - fs[k + 1]) for k in range(len(fs) - 1)]
            chk = _margin_check("decrease_envelope", pairs)
            # strict inequality
            chk.passed = chk.n_checked == 0 or chk.worst_margin > 0
            out.append(chk)
        else:
            pairs = [(0.0, fs[k] - fs[k + 1]) for k in range(len(fs) - 1)]
            out.append(_margin_check("decrease_envelope", pairs))
    return RateReport(out)
