"""Frozen benchmark fixtures shared by the acceptance tests, suites and CLI.

Both fixtures are two-class synthetic blob datasets from
``make_synthetic(seed=42, ..., separation=2.0)`` with the starting point
``init_x0(dim, seed=0)`` (uniform on [0, 1)). Dataset checksums are pinned so
a change in the generator is caught instead of silently moving the targets.

``f_star_ref`` values were produced by :func:`harness.compute_f_star`
(FNCR-LS defaults, ``grad_tol = 1e-12``, budget ``1e7`` units):

* strongly convex (N=500, d=20, mu=0.1): converged to ``||g|| ~ 3e-15``;
* convex (N=50, d=200, mu=0): the classes are linearly separable, so the
  infimum is 0 and is not attained; the tight run stops at ``||g|| ~ 8e-13``
  with ``f ~ 4e-13``. Comparisons against it use an absolute 1e-9.
"""

import functools
from dataclasses import dataclass

import numpy as np

from .config import SolverConfig
from .harness import ExperimentSpec, init_x0
from .problems import CrossEntropyProblem, ProblemInfo, estimate_LH, estimate_spectrum, make_synthetic
from .solvers import fncr_ls

SEPARATION = 2.0
DATA_SEED = 42
X0_SEED = 0


@dataclass(frozen=True)
class Fixture:
    name: str
    N: int
    d: int
    C: int
    mu: float
    checksum: str
    f_star_ref: float
    f_star_tol: float

    @property
    def dim(self):
        return self.C * self.d

    def dataset(self):
        data = make_synthetic(DATA_SEED, self.N, self.d, self.C, SEPARATION)
        got = data.checksum()
        if got != self.checksum:
            raise RuntimeError(f"fixture {self.name}: dataset checksum {got} != pinned {self.checksum}")
        return data

    def problem(self, counter=None):
        return CrossEntropyProblem(self.dataset(), self.mu, counter=counter)

    def x0(self):
        return init_x0(self.dim, X0_SEED)

    def problem_dict(self):
        return {"kind": "cross_entropy", "dataset": "synthetic", "N": self.N, "d": self.d,
                "C": self.C, "separation": SEPARATION, "data_seed": DATA_SEED, "mu": self.mu,
                "n_features": None}

    def spec(self, solver, config=None, f_star=True, out=None):
        from .harness import SOLVER_DEFAULTS

        cfg = config if config is not None else SolverConfig(**SOLVER_DEFAULTS[solver])
        return ExperimentSpec(problem=self.problem_dict(), solver=solver, config=cfg,
                              output_path=out, seed=X0_SEED,
                              f_star=self.f_star_ref if f_star else None)


STRONGLY_CONVEX = Fixture(
    name="strongly_convex", N=500, d=20, C=2, mu=0.1,
    checksum="a156e58f61aeaef2b2fb45e64174a9bf93be953014e2ba0f309af4d45f9ed30e",
    f_star_ref=1.5345280890032669, f_star_tol=1e-12,
)

CONVEX = Fixture(
    name="convex", N=50, d=200, C=2, mu=0.0,
    checksum="7dc456aa1843456ac559413701a503a2e52ecb763ae99302a1b9ec38851e1287",
    f_star_ref=4.1389114358025836e-13, f_star_tol=1e-9,
)

FIXTURES = {fx.name: fx for fx in (STRONGLY_CONVEX, CONVEX)}


@functools.lru_cache(maxsize=None)
def fixture_info(name):
    """Constant estimates for a fixture.

    * ``mu_est``, ``lmax_est``: power iteration on the Hessian at ``x0``;
    * ``LH_est``: :func:`estimate_LH` (radius 1) around ``x0`` and every
      iterate of a pilot run with default settings (FNCR-LS when strongly
      convex, the gradient-regularized variant otherwise).
    """
    fx = FIXTURES[name]
    x0 = fx.x0()
    spec = estimate_spectrum(fx.problem(), x0)
    pilot_cfg = SolverConfig() if fx.mu > 0 else SolverConfig(sigma=0.01)
    pilot = fncr_ls(fx.problem(), x0, pilot_cfg, record_x=True)
    LH = estimate_LH(fx.problem(), np.array(pilot.iterates), 1.0)
    return ProblemInfo(spec.mu_est, spec.lmax_est, LH, fx.f_star_ref, spec.converged)
