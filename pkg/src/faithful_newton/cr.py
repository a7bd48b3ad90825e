"""Conjugate Residual for ``H s = -g`` with ``H`` symmetric positive definite.

``H`` is only touched through a product callback. Each step costs exactly
one product: ``H r`` is computed, ``H p`` follows from the recurrence
``Hp' = Hr' + gamma Hp``.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import Breakdown, OperatorNotPD, ZeroGradient
from .oracle import dot, norm

BREAKDOWN_TOL = 1e-300


@dataclass
class CrState:
    g: np.ndarray
    gnorm: float
    t: int
    s: np.ndarray
    r: np.ndarray
    p: np.ndarray
    Hp: np.ndarray
    Hr: np.ndarray
    rHr: float
    alpha_hist: list = field(default_factory=list)
    gs_hist: list = field(default_factory=list)
    rnorm_hist: list = field(default_factory=list)
    snapshots: list = None

    @property
    def rnorm(self):
        return self.rnorm_hist[-1]

    def snapshot(self):
        return CrSnapshot(self.t, self.s.copy(), self.r.copy(), self.p.copy(),
                          self.Hp.copy(), self.Hr.copy())


@dataclass
class CrSnapshot:
    t: int
    s: np.ndarray
    r: np.ndarray
    p: np.ndarray
    Hp: np.ndarray
    Hr: np.ndarray


def cr_init(hvp, g, record=False):
    """Start CR from ``s = 0``, ``r = p = -g``. Uses one product."""
    g = np.asarray(g)
    if g.dtype != object:
        g = g.astype(np.float64, copy=False)
    gnorm = norm(g)
    if gnorm == 0.0:
        raise ZeroGradient("CR needs a nonzero right-hand side")
    r = -g
    Hr = hvp(r)
    st = CrState(
        g=g, gnorm=gnorm, t=0, s=np.zeros_like(g), r=r, p=r.copy(),
        Hp=Hr.copy(), Hr=Hr, rHr=dot(r, Hr),
        gs_hist=[0.0], rnorm_hist=[gnorm],
    )
    if record:
        st.snapshots = [st.snapshot()]
    return st


def cr_step(st, hvp):
    """Advance ``st`` by one CR iteration in place and return it."""
    if not st.rHr > 0.0:
        raise OperatorNotPD(f"<r, Hr> = {float(st.rHr):.3e} at t={st.t}")
    hp2 = dot(st.Hp, st.Hp)
    if hp2 < BREAKDOWN_TOL:
        raise Breakdown(f"||Hp||^2 = {float(hp2):.3e} at t={st.t}")
    alpha = st.rHr / hp2
    st.s = st.s + alpha * st.p
    st.r = st.r - alpha * st.Hp
    Hr = hvp(st.r)
    rHr = dot(st.r, Hr)
    gamma = rHr / st.rHr
    # p' uses the *new* residual, as the recurrence H p' = H r' + gamma H p requires.
    st.p = st.r + gamma * st.p
    st.Hp = Hr + gamma * st.Hp
    st.Hr, st.rHr = Hr, rHr
    st.t += 1
    st.alpha_hist.append(alpha)
    st.gs_hist.append(dot(st.g, st.s))
    st.rnorm_hist.append(norm(st.r))
    if st.snapshots is not None:
        st.snapshots.append(st.snapshot())
    return st


def cr_solve(hvp, g, tol=0.0, max_iter=None, record=False):
    """Run CR until ``||r|| <= tol ||g||`` or ``max_iter`` steps.

    Returns ``(s, rnorm, t, state)``; the number of products used is ``t + 1``.
    """
    if not 0.0 <= tol < 1.0:
        raise ValueError("tol must be in [0, 1)")
    max_iter = len(g) if max_iter is None else int(max_iter)
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    st = cr_init(hvp, g, record=record)
    while st.rnorm > tol * st.gnorm and st.t < max_iter:
        cr_step(st, hvp)
    return st.s, st.rnorm, st.t, st


# ---------------------------------------------------------------- diagnostics

@dataclass
class PropertyCheck:
    name: str
    passed: bool
    worst_margin: float
    n_checked: int


@dataclass
class CrPropertyReport:
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


class _Tracker:
    def __init__(self, name):
        self.name, self.worst, self.n = name, np.inf, 0

    def lt(self, a, b, tol=0.0):
        """Record ``a < b`` (relaxed to ``a < b + tol``)."""
        self.n += 1
        self.worst = min(self.worst, (b - a) + tol)

    def result(self):
        if self.n == 0:
            return PropertyCheck(self.name, True, float("inf"), 0)
        return PropertyCheck(self.name, bool(self.worst > 0), float(self.worst), self.n)


def numerical_grade(state, tol=1e-10):
    """First ``t`` with ``||r_t|| <= tol ||g||`` (the last recorded ``t`` if none)."""
    for t, rn in enumerate(state.rnorm_hist):
        if rn <= tol * state.gnorm:
            return t
    return len(state.rnorm_hist) - 1


def verify_cr_properties(state, H, grade=None, lam=None, rtol=1e-8):
    """Check the classical CR monotonicity/orthogonality properties on a recorded run.

    ``state`` must come from ``cr_solve(..., record=True)`` and may hold
    float64 or extended-precision (object dtype) vectors. ``H`` is the dense
    matrix, in the same scalar type as the run; eigenvalues and the direct
    solve oracle use its float64 rounding. ``grade`` defaults to
    :func:`numerical_grade`. Margins are ``rhs - lhs (+ tolerance)``; a check
    passes iff its worst margin is positive.

    ``H s_t`` is taken as ``-g - r_t`` and ``H r_t``, ``H p_t`` as the
    products the solver carried; ``residual_consistency`` separately checks
    ``r_t = -g - H s_t`` with explicit products (relative 1e-10).

    Checks, for ``1 <= t <= grade`` unless noted:

    * ``residual_decrease``  ``||r_t|| < ||r_{t-1}||``
    * ``step_increase``      ``||s_{t-1}|| < ||s_t||``
    * ``Hs_increase``        ``||H s_{t-1}|| < ||H s_t|| <= ||g||``
    * ``exact_at_grade``     ``||r_grade|| <= 1e-10 ||g||`` and ``s_grade = -H^{-1} g`` (relative ``rtol``)
    * ``gs_decrease``        ``<g,s_t> < <g,s_{t-1}>`` and ``<g,s_t> < 0``
    * ``Hp_le_Hr``           ``||H p_t|| <= ||H r_t||``, strict for ``t <= grade-1``
    * ``gs_le_minus_sHs``    ``<g,s_t> <= -<s_t,H s_t> < 0``, first part strict for ``t <= grade-1``
    * ``sHr_orthogonal``     ``|<s_t, H r_t>| <= rtol ||g||^2``
    * ``alpha_bounds``       ``1/lmax <= alpha_t <= 1/lmin`` for ``0 <= t <= grade-1``, slack ``1e-10/lmin``
    * ``gs_telescoping``     ``<g,s_t> <= <g,s_{t-1}> - ||r_{t-1}||^2 / lmax``, slack ``1e-10 ||g||^2/lmax``
    """
    snaps = state.snapshots
    if snaps is None:
        raise ValueError("run CR with record=True")
    H64 = np.asarray(H, dtype=np.float64)
    g = state.g
    gnorm = state.gnorm
    g2 = gnorm * gnorm
    grade = numerical_grade(state) if grade is None else int(grade)
    if lam is None:
        ev = np.linalg.eigvalsh(H64)
        lam = (ev[0], ev[-1])
    lmin, lmax = float(lam[0]), float(lam[1])

    names = ["residual_decrease", "step_increase", "Hs_increase", "exact_at_grade",
             "gs_decrease", "Hp_le_Hr", "gs_le_minus_sHs", "sHr_orthogonal",
             "alpha_bounds", "gs_telescoping", "residual_consistency"]
    tr = {n: _Tracker(n) for n in names}

    # per-snapshot scalars, computed once
    rn, sn, hsn, gs = [], [], [], []
    for snap in snaps[: grade + 1]:
        Hs = -g - snap.r
        tr["residual_consistency"].lt(norm(Hs - H @ snap.s), 0.0, tol=1e-10 * gnorm)
        rn.append(norm(snap.r))
        sn.append(norm(snap.s))
        hsn.append(norm(Hs))
        gs.append(dot(g, snap.s))

    for t in range(1, grade + 1):
        cur = snaps[t]
        tr["residual_decrease"].lt(rn[t], rn[t - 1])
        tr["step_increase"].lt(sn[t - 1], sn[t])
        tr["Hs_increase"].lt(hsn[t - 1], hsn[t])
        tr["Hs_increase"].lt(hsn[t], gnorm, tol=rtol * gnorm)
        tr["gs_decrease"].lt(gs[t], gs[t - 1])
        tr["gs_decrease"].lt(gs[t], 0.0)
        hp, hr = norm(cur.Hp), norm(cur.Hr)
        sHs = -gs[t] - dot(cur.s, cur.r)
        if t <= grade - 1:
            tr["Hp_le_Hr"].lt(hp, hr)
            tr["gs_le_minus_sHs"].lt(gs[t], -sHs)
        else:
            tr["Hp_le_Hr"].lt(hp, hr, tol=rtol * gnorm * lmax)
            tr["gs_le_minus_sHs"].lt(gs[t], -sHs, tol=rtol * abs(sHs))
        tr["gs_le_minus_sHs"].lt(-sHs, 0.0)
        tr["sHr_orthogonal"].lt(abs(dot(cur.s, cur.Hr)), 0.0, tol=rtol * g2)
        tr["gs_telescoping"].lt(gs[t], gs[t - 1] - rn[t - 1] ** 2 / lmax, tol=1e-10 * g2 / lmax)

    slack = 1e-10 / lmin
    for t in range(0, grade):
        a = state.alpha_hist[t]
        tr["alpha_bounds"].lt(1.0 / lmax, a, tol=slack)
        tr["alpha_bounds"].lt(a, 1.0 / lmin, tol=slack)

    if grade >= 1:
        final = snaps[grade]
        tr["exact_at_grade"].lt(rn[grade], 0.0, tol=1e-10 * gnorm)
        g64 = np.array(g, dtype=np.float64)
        exact = -np.linalg.solve(H64, g64)
        err = np.linalg.norm(np.array(final.s, dtype=np.float64) - exact)
        tr["exact_at_grade"].lt(err, 0.0, tol=rtol * np.linalg.norm(exact))

    return CrPropertyReport([tr[n].result() for n in names])
