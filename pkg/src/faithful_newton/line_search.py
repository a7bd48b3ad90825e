"""Backtracking line search on the Armijo (linear-model) sufficient-reduction test."""

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import LineSearchFailure, NonFiniteError, NotDescent
from .oracle import dot


@dataclass
class LineSearchResult:
    eta: float
    j: int
    f_new: float
    accepted: np.ndarray
    trials: int       # function values requested (cached first trial included)
    f_evals: int      # function values actually paid for


def backtrack(oracle, x, fx, g, s, rho=1e-4, zeta=0.5, eta0=1.0, j_max=60, f_first=None):
    """Smallest ``j >= 0`` such that ``eta = eta0 * zeta**j`` satisfies
    ``f(x) - f(x + eta s) >= rho * eta * (-<g, s>)``.

    ``f_first``, when given, must be ``f(x + eta0 s)``; it replaces the first
    trial evaluation (free). Non-finite trial values fail the test.
    Raises :class:`LineSearchFailure` once ``j`` would exceed ``j_max``.
    """
    gs = dot(g, s)
    if not gs < 0.0:
        raise NotDescent(f"<g, s> = {gs:.3e}: line search needs a descent direction")
    if not (0.0 < zeta < 1.0 and 0.0 < rho < 0.5 and eta0 > 0.0):
        raise ValueError("need 0 < zeta < 1, 0 < rho < 1/2, eta0 > 0")
    paid = 0
    for j in range(j_max + 1):
        eta = eta0 * zeta**j
        step = eta * s
        if j == 0 and f_first is not None:
            f_new = f_first
        else:
            paid += 1
            try:
                f_new = oracle.f(x + step)
            except NonFiniteError:
                f_new = math.inf
        if fx - f_new >= rho * eta * (-gs):
            return LineSearchResult(eta, j, f_new, step, j + 1, paid)
    raise LineSearchFailure(f"no sufficient step after {j_max} backtracks (eta >= {eta:.3e})",
                            required=rho * eta0 * (-gs), fx=fx)


def eta_floor(gs, h, LH, rho, zeta):
    """Guaranteed lower bound on the step accepted by :func:`backtrack`.

    ``min(1, zeta * sqrt(3 (1 - 2 rho) / LH) * h**0.75 / |gs|**0.25)`` where
    ``h`` is a lower bound on the curvature of the operator used to build the
    direction and ``gs = <g, s>``. Equal to 1 when ``LH <= 0``.
    """
    if LH <= 0.0:
        return 1.0
    val = zeta * math.sqrt(3.0 * (1.0 - 2.0 * rho) / LH) * h**0.75 / abs(gs) ** 0.25
    return min(1.0, val)
