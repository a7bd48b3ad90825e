"""CR with sufficiency checks: the inner direction solver of the Faithful-Newton loop.

CR runs on ``H s = -g``. After ``T`` iterations each iterate must deliver a
reduction of at least ``rho_t`` times the linear-model decrease
(``rho_t = rho ||g||^2 / ||r_{t-1}||^2``), otherwise iterating stops:

* failing right at ``t = T`` returns ``s_T`` tagged ``INS``;
* failing later returns an earlier verified iterate tagged ``SUF``;
* ``||r_t|| <= omega ||g||`` or ``t = T_max`` returns ``s_t`` tagged ``TER``
  (``omega`` is floored at machine epsilon).

Checks cost one function value each, so they only run at checkpoints
``t = T + W m``. The iterates between two checkpoints are kept in memory;
when a checkpoint fails, a bisection over that window locates the last
sufficient iterate without rerunning CR.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np

from .cr import cr_init, cr_step
from .exceptions import NonFiniteError, NotDescent
from .oracle import dot

# A residual this small relative to ||g|| is zero to working precision: the
# Krylov space is exhausted and further steps only shrink the recursive
# residual towards underflow. ``omega = 0`` therefore means "run to the
# numerical grade".
RESIDUAL_FLOOR = float(np.finfo(np.float64).eps)


class DirectionType(str, enum.Enum):
    SUF = "SUF"
    INS = "INS"
    TER = "TER"

    def __str__(self):
        return self.value


@dataclass
class Sufficiency:
    ok: bool
    f_new: float
    reduction: float
    gs: float


def is_c_sufficient(oracle, x, fx, g, d, c):
    """Test ``f(x) - f(x+d) >= c * (-<g, d>)`` with one function value.

    A non-finite ``f(x+d)`` counts as a failed test, not an error.
    """
    gs = dot(g, d)
    if not gs < 0.0:
        raise NotDescent(f"<g, d> = {gs:.3e} is not negative")
    try:
        f_new = oracle.f(x + d)
    except NonFiniteError:
        return Sufficiency(False, math.inf, -math.inf, gs)
    red = fx - f_new
    return Sufficiency(red >= c * (-gs), f_new, red, gs)


@dataclass
class InnerResult:
    direction: np.ndarray
    dtype: DirectionType
    t_used: int           # CR steps performed (products used = t_used + 1)
    t_dir: int            # index of the returned iterate
    rnorm: float          # residual norm of the returned iterate
    gs: float
    checks_performed: int
    best_reduction: float = None  # f(x) - f(x + direction) when it was evaluated
    f_new: float = None           # f(x + direction) when it was evaluated


class _Candidates:
    """Verified-sufficient iterates; keeps the best reduction (ties -> larger t)."""

    def __init__(self):
        self.best = None

    def offer(self, t, s, suff):
        if self.best is None or suff.reduction > self.best[2].reduction or (
            suff.reduction == self.best[2].reduction and t > self.best[0]
        ):
            self.best = (t, s, suff)


def fn_cr_solve(oracle, x, g, fx, cfg, T=None, T_max=None, omega=None):
    """Inner solve at ``x`` with gradient ``g`` and cached ``fx = f(x)``.

    ``oracle.hvp(x, .)`` defines the operator (possibly regularized).
    ``T``/``T_max``/``omega`` override the config values; ``T_max`` is always capped
    at ``len(g)`` and ``T`` at ``T_max``.
    """
    dim = len(g)
    T_max = min(cfg.T_max if T_max is None else T_max, dim)
    T = min(cfg.T if T is None else T, T_max)
    if T < 1:
        raise ValueError("T must be >= 1")
    W = cfg.check_window
    rho = cfg.rho
    omega = cfg.omega if omega is None else omega

    def hvp(v):
        return oracle.hvp(x, v)

    st = cr_init(hvp, g)
    gnorm = st.gnorm
    g2 = gnorm * gnorm
    checks = 0
    cands = _Candidates()
    window = {}           # t -> s_t since the last passed checkpoint
    last_pass = None      # (t, s_t, Sufficiency) of the last passed checkpoint
    last = None           # (t, Sufficiency) of the most recent evaluation

    def rho_at(t):
        return rho if t == 0 else rho * g2 / st.rnorm_hist[t - 1] ** 2

    def check(t, s):
        nonlocal checks, last
        checks += 1
        suff = is_c_sufficient(oracle, x, fx, g, s, rho_at(t))
        last = (t, suff)
        if suff.ok:
            cands.offer(t, s, suff)
        return suff

    def result(s, dtype, t_dir, suff=None):
        if suff is None and last is not None and last[0] == t_dir and last[1].ok:
            suff = last[1]
        return InnerResult(
            direction=s, dtype=dtype, t_used=st.t, t_dir=t_dir,
            rnorm=st.rnorm_hist[t_dir], gs=st.gs_hist[t_dir],
            checks_performed=checks,
            best_reduction=None if suff is None else suff.reduction,
            f_new=None if suff is None else suff.f_new,
        )

    while True:
        t = st.t
        if t >= T and (t - T) % W == 0:
            suff = check(t, st.s)
            if not suff.ok:
                if t == T:
                    return result(st.s, DirectionType.INS, t, suff)
                return _fallback(window, last_pass, t, W, check, cands, result)
            last_pass = (t, st.s, suff)
            window = {}
        elif t > T:
            window[t] = st.s
        if st.rnorm <= max(omega, RESIDUAL_FLOOR) * gnorm or t == T_max:
            return result(st.s, DirectionType.TER, t)
        cr_step(st, hvp)


def _fallback(window, last_pass, t_fail, W, check, cands, result):
    """A checkpoint after ``T`` failed: return a verified iterate as ``SUF``.

    With ``W = 1`` this is simply the previous iterate. Otherwise the window
    between the last passed checkpoint and ``t_fail`` is bisected on
    sufficiency, and the verified iterate with the largest actual reduction
    (over all checks of this solve, ties to larger ``t``) is returned.
    """
    if W == 1:
        t_prev, s_prev, suff = last_pass
        return result(s_prev, DirectionType.SUF, t_prev, suff)
    lo, hi = last_pass[0], t_fail
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if check(mid, window[mid]).ok:
            lo = mid
        else:
            hi = mid
    t_best, s_best, suff = cands.best
    return result(s_best, DirectionType.SUF, t_best, suff)
