"""Hyperparameters shared by the inner solver, the line search and the outer loops."""

import dataclasses
import math
from dataclasses import dataclass

from .exceptions import ConfigError


@dataclass(frozen=True)
class SolverConfig:
    """Validated solver hyperparameters.

    ``sigma = 0`` gives the plain Hessian; ``sigma > 0`` the gradient-regularized
    operator ``H + sigma*sqrt(||g||) I``. ``theta > 0`` replaces the fixed ``T``
    by the per-iteration schedule ``ceil(theta / min(1, sqrt(||g_k||)))``,
    clamped to ``[1, T_max]``. ``kappa > 0`` switches on the condition-number
    schedule instead: ``T_k = ceil(sqrt(kappa) ln(2 / ||g_k||) / 4)`` (at least
    1, at most ``T_max``) and ``omega_k = min(||g_k||, 1/2)``; pass an estimate
    such as ``ProblemInfo.kappa_est``. ``rho`` drives the sufficiency checks inside the
    inner solver, ``ls_rho`` the backtracking line search.
    """

    rho: float = 0.01
    omega: float = 0.0
    T: int = 5
    T_max: int = 1000
    zeta: float = 0.5
    eta0: float = 1.0
    sigma: float = 0.0
    theta: float = 0.0
    kappa: float = 0.0
    grad_tol: float = 1e-6
    oracle_budget: float = 1e5
    max_outer: int = 100_000
    check_window: int = 20
    ls_rho: float = 1e-4
    j_max: int = 60

    def __post_init__(self):
        def need(ok, msg):
            if not ok:
                raise ConfigError(msg)

        for name in ("rho", "omega", "zeta", "eta0", "sigma", "theta", "kappa", "grad_tol",
                     "oracle_budget", "ls_rho"):
            v = getattr(self, name)
            need(isinstance(v, (int, float)) and math.isfinite(v), f"{name} must be a finite number")
        for name in ("T", "T_max", "max_outer", "check_window", "j_max"):
            v = getattr(self, name)
            need(isinstance(v, int) and not isinstance(v, bool), f"{name} must be an integer")
        need(0 < self.rho < 0.5, f"rho must lie in (0, 1/2), got {self.rho}")
        need(0 < self.ls_rho < 0.5, f"ls_rho must lie in (0, 1/2), got {self.ls_rho}")
        need(0 <= self.omega < 1, f"omega must lie in [0, 1), got {self.omega}")
        need(self.T >= 1, f"T must be >= 1, got {self.T}")
        need(self.T_max >= self.T, f"T_max ({self.T_max}) must be >= T ({self.T})")
        need(0 < self.zeta < 1, f"zeta must lie in (0, 1), got {self.zeta}")
        need(self.eta0 > 0, f"eta0 must be > 0, got {self.eta0}")
        need(self.sigma >= 0, f"sigma must be >= 0, got {self.sigma}")
        need(self.theta >= 0, f"theta must be >= 0, got {self.theta}")
        need(self.kappa == 0 or self.kappa >= 1, f"kappa must be 0 (off) or >= 1, got {self.kappa}")
        need(not (self.theta > 0 and self.kappa > 0), "theta and kappa schedules are exclusive")
        need(self.grad_tol >= 0, f"grad_tol must be >= 0, got {self.grad_tol}")
        need(self.oracle_budget > 0, f"oracle_budget must be > 0, got {self.oracle_budget}")
        need(self.max_outer >= 1, f"max_outer must be >= 1, got {self.max_outer}")
        need(self.check_window >= 1, f"check_window must be >= 1, got {self.check_window}")
        need(self.j_max >= 0, f"j_max must be >= 0, got {self.j_max}")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def inner_omega(self, gnorm):
        """Residual tolerance for one inner solve at gradient norm ``gnorm``."""
        return min(gnorm, 0.5) if self.kappa > 0 else self.omega

    @classmethod
    def field_names(cls):
        return [f.name for f in dataclasses.fields(cls)]

    def inner_T(self, gnorm, dim):
        """Effective ``(T, T_max)`` for one inner solve at gradient norm ``gnorm``.

        ``T_max`` is capped at the problem dimension (CR is exact there) and
        ``T`` at ``T_max``.
        """
        t_max = min(self.T_max, dim)
        if self.theta > 0:
            T = math.ceil(self.theta / min(1.0, math.sqrt(gnorm)))
        elif self.kappa > 0:
            T = math.ceil(math.sqrt(self.kappa) * math.log(2.0 / gnorm) / 4.0)
        else:
            T = self.T
        return max(1, min(T, t_max)), t_max
