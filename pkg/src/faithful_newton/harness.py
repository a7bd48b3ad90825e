"""Experiment specs, config files, CSV traces and reference optima.

Config files are plain text, one ``key=value`` per line; ``#`` starts a
comment, blank lines are ignored, later lines win. Recognised keys:

========================  ==================================================
``solver``                ``fncr_ls`` | ``fncr_reg_ls`` | ``newton_cg`` | ``gd``
``problem``               ``quadratic`` | ``cross_entropy``
``dim cond distinct``     quadratic size, condition number, distinct eigenvalues
``problem_seed``          seed for the quadratic's matrix and right-hand side
``dataset``               ``synthetic`` or a path (``.csv`` -> CSV, else LIBSVM)
``N d C separation``      synthetic dataset shape and class separation
``data_seed``             seed of the synthetic dataset
``n_features``            LIBSVM feature count (inferred when absent)
``mu``                    ridge coefficient of the cross-entropy objective
``seed x0``               starting point seed and scheme (``uniform01``/``zeros``)
``f_star``                reference optimum for the ``delta`` column
``out``                   CSV output path
any SolverConfig field    ``rho omega T T_max zeta eta0 sigma theta kappa grad_tol
                          oracle_budget max_outer check_window ls_rho j_max``
========================  ==================================================

Solver-dependent defaults: ``fncr_reg_ls`` uses ``sigma = 0.01``,
``newton_cg`` uses ``omega = 0.1``, ``gd`` uses ``eta0 = 0.01``; everything
else starts from :class:`SolverConfig`'s defaults.
"""

import csv
import dataclasses
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import SolverConfig
from .exceptions import ConfigError
from .problems import (CrossEntropyProblem, load_csv, load_libsvm, make_synthetic, philox,
                       random_quadratic)
from .solvers import BUDGET, CONVERGED, MAX_ITER, SOLVERS, TraceRecord

SOLVER_DEFAULTS = {
    "fncr_ls": {},
    "fncr_reg_ls": {"sigma": 0.01},
    "newton_cg": {"omega": 0.1},
    "gd": {"eta0": 0.01},
}

PROBLEM_DEFAULTS = {
    "quadratic": {"dim": 20, "cond": 100.0, "distinct": None, "problem_seed": 0},
    "cross_entropy": {"dataset": "synthetic", "N": 500, "d": 20, "C": 2, "separation": 2.0,
                      "data_seed": 42, "mu": 0.1, "n_features": None},
}

_INT_KEYS = {"dim", "distinct", "problem_seed", "N", "d", "C", "data_seed", "n_features", "seed"}
_FLOAT_KEYS = {"cond", "separation", "mu", "f_star"}
_STR_KEYS = {"solver", "problem", "dataset", "x0", "out"}
_CFG_FIELDS = {f.name: f.type for f in dataclasses.fields(SolverConfig)}
KNOWN_KEYS = _INT_KEYS | _FLOAT_KEYS | _STR_KEYS | set(_CFG_FIELDS)

CSV_HEADER = ["k", "f", "gnorm", "delta", "oracle_units", "wall_ns", "dtype", "eta",
              "inner_t", "ls_backtracks"]

EXIT_OK, EXIT_BUDGET, EXIT_SOLVER, EXIT_CONFIG = 0, 2, 3, 4


@dataclass
class ExperimentSpec:
    problem: dict
    solver: str
    config: SolverConfig
    output_path: str = None
    seed: int = 0
    x0_scheme: str = "uniform01"
    f_star: float = None

    def build_problem(self):
        return build_problem(self.problem)


# ---------------------------------------------------------------- parsing

def _as_int(key, text):
    try:
        v = float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from None
    if not v.is_integer():
        raise ConfigError(f"{key}: expected an integer, got {text!r}")
    return int(v)


def _as_float(key, text):
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {text!r}") from None


def _convert(key, text):
    text = text.strip()
    if key in _STR_KEYS:
        return text
    if text.lower() in ("none", ""):
        return None
    if key in _INT_KEYS or _CFG_FIELDS.get(key) is int:
        return _as_int(key, text)
    return _as_float(key, text)


def parse_pairs(lines, source="config"):
    """Parse ``key=value`` lines into a dict of raw strings (validated keys)."""
    out = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source} line {lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{source} line {lineno}: unknown key {key!r}")
        out[key] = value
    return out


def parse_config(path=None, text=None, overrides=None, solver=None, problem=None,
                 out=None, seed=None):
    """Build an :class:`ExperimentSpec` from a config file and/or flags.

    Precedence (lowest to highest): defaults, file (``path`` or ``text``),
    ``overrides`` (dict or ``key=value`` strings), explicit keyword flags.
    """
    raw = {}
    if path is not None:
        with open(path) as fh:
            raw.update(parse_pairs(fh, source=str(path)))
    if text is not None:
        raw.update(parse_pairs(io.StringIO(text)))
    if overrides:
        if isinstance(overrides, dict):
            items = [f"{k}={v}" for k, v in overrides.items()]
        else:
            items = list(overrides)
        raw.update(parse_pairs(items, source="--override"))
    for key, val in (("solver", solver), ("problem", problem), ("out", out), ("seed", seed)):
        if val is not None:
            raw[key] = str(val)
    values = {k: _convert(k, v) for k, v in raw.items()}

    solver_name = values.pop("solver", "fncr_ls")
    if solver_name not in SOLVERS:
        raise ConfigError(f"unknown solver {solver_name!r}; choose from {sorted(SOLVERS)}")
    kind = values.pop("problem", None)
    if kind is None:
        raise ConfigError("missing problem (quadratic or cross_entropy)")
    if kind not in PROBLEM_DEFAULTS:
        raise ConfigError(f"unknown problem {kind!r}; choose from {sorted(PROBLEM_DEFAULTS)}")

    prob = dict(PROBLEM_DEFAULTS[kind], kind=kind)
    for key in list(values):
        if key in prob:
            prob[key] = values.pop(key)
    stray = [k for k in values if k in _INT_KEYS | _FLOAT_KEYS and k not in ("seed", "f_star")]
    if stray:
        raise ConfigError(f"keys {stray} do not apply to problem {kind!r}")

    cfg_kw = dict(SOLVER_DEFAULTS[solver_name])
    cfg_kw.update({k: values.pop(k) for k in list(values) if k in _CFG_FIELDS})
    if any(v is None for v in cfg_kw.values()):
        raise ConfigError("solver settings need explicit values")
    if solver_name == "fncr_reg_ls" and not cfg_kw.get("sigma", 0) > 0:
        raise ConfigError("fncr_reg_ls needs sigma > 0")
    cfg = SolverConfig(**cfg_kw)

    scheme = values.pop("x0", "uniform01")
    if scheme not in ("uniform01", "zeros"):
        raise ConfigError(f"x0 must be uniform01 or zeros, got {scheme!r}")
    return ExperimentSpec(
        problem=prob, solver=solver_name, config=cfg,
        output_path=values.pop("out", None), seed=values.pop("seed", None) or 0,
        x0_scheme=scheme, f_star=values.pop("f_star", None),
    )


def spec_to_text(spec):
    """Serialize a spec back to config-file text (round-trips through parse_config)."""
    lines = [f"solver={spec.solver}", f"problem={spec.problem['kind']}"]
    lines += [f"{k}={v}" for k, v in spec.problem.items() if k != "kind" and v is not None]
    for name in SolverConfig.field_names():
        lines.append(f"{name}={getattr(spec.config, name)!r}")
    lines += [f"seed={spec.seed}", f"x0={spec.x0_scheme}"]
    if spec.f_star is not None:
        lines.append(f"f_star={spec.f_star!r}")
    if spec.output_path:
        lines.append(f"out={spec.output_path}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- building

def build_problem(prob):
    kind = prob["kind"]
    if kind == "quadratic":
        return random_quadratic(prob["problem_seed"], prob["dim"], prob["cond"], prob["distinct"])
    source = prob["dataset"]
    if source == "synthetic":
        data = make_synthetic(prob["data_seed"], prob["N"], prob["d"], prob["C"], prob["separation"])
    elif str(source).lower().endswith(".csv"):
        data = load_csv(source)
    else:
        data = load_libsvm(source, n_features=prob.get("n_features"))
    return CrossEntropyProblem(data, prob["mu"])


def init_x0(dim, seed=0, scheme="uniform01"):
    """Starting point: ``U[0, 1)`` entries from ``philox(seed)``, or zeros."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if scheme == "zeros":
        return np.zeros(dim)
    if scheme == "uniform01":
        return philox(seed).uniform(0.0, 1.0, dim)
    raise ValueError(f"unknown scheme {scheme!r}")


# ---------------------------------------------------------------- CSV

def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def emit_csv(trace, dest):
    """Write the trace as CSV to a path or text stream."""
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", newline="") as fh:
            return emit_csv(trace, fh)
    w = csv.writer(dest, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for rec in trace:
        w.writerow([_fmt(getattr(rec, c)) for c in CSV_HEADER])
    return dest


def trace_to_csv(trace):
    return emit_csv(trace, io.StringIO()).getvalue()


def read_csv(src):
    """Parse a CSV written by :func:`emit_csv` back into TraceRecords."""
    if isinstance(src, (str, os.PathLike)):
        with open(src, newline="") as fh:
            return read_csv(fh)
    rows = list(csv.reader(src))
    if not rows or rows[0] != CSV_HEADER:
        raise ValueError("not a trace CSV (header mismatch)")
    out = []
    for row in rows[1:]:
        rec = dict(zip(CSV_HEADER, row))
        out.append(TraceRecord(
            k=int(rec["k"]), f=float(rec["f"]), gnorm=float(rec["gnorm"]),
            delta=float(rec["delta"]) if rec["delta"] else None,
            oracle_units=int(rec["oracle_units"]), wall_ns=int(rec["wall_ns"]),
            dtype=rec["dtype"], eta=float(rec["eta"]), inner_t=int(rec["inner_t"]),
            ls_backtracks=int(rec["ls_backtracks"]),
        ))
    return out


def strip_wall(csv_text):
    """Blank the ``wall_ns`` column so traces can be compared byte for byte."""
    col = CSV_HEADER.index("wall_ns")
    lines = csv_text.splitlines()
    out = [lines[0]]
    for line in lines[1:]:
        parts = line.split(",")
        parts[col] = ""
        out.append(",".join(parts))
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------- running

@dataclass
class ExperimentOutcome:
    spec: ExperimentSpec
    result: object
    csv_text: str
    summary: str
    exit_code: int = field(default=EXIT_OK)


def exit_code_for(status):
    if status == CONVERGED:
        return EXIT_OK
    if status in (BUDGET, MAX_ITER):
        return EXIT_BUDGET
    return EXIT_SOLVER


def summary_line(result):
    s = (f"status={result.status} f={result.f:.17g} gnorm={result.gnorm:.17g} "
         f"units={result.units} iterations={result.n_iter} ins={result.ins_count}")
    if result.error:
        s += f" error={result.error!r}"
    return s


def run_experiment(spec, write=True):
    """Run one spec; writes the CSV to ``spec.output_path`` when set."""
    problem = spec.build_problem()
    x0 = init_x0(problem.dim, spec.seed, spec.x0_scheme)
    result = SOLVERS[spec.solver](problem, x0, spec.config, f_star=spec.f_star)
    text = trace_to_csv(result.trace)
    if write and spec.output_path:
        with open(spec.output_path, "w", newline="") as fh:
            fh.write(text)
    return ExperimentOutcome(spec, result, text, summary_line(result), exit_code_for(result.status))


def run_many(specs, workers=1):
    """Run independent specs, optionally on worker threads (each fully isolated)."""
    if workers <= 1:
        return [run_experiment(s) for s in specs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_experiment, specs))


@dataclass
class FStar:
    value: float
    converged: bool
    gnorm: float
    units: int
    reason: str = ""


def compute_f_star(spec, grad_tol=1e-12, budget=1e7):
    """Reference optimum: FNCR-LS with default settings from the experiment's start
    point, run to ``||g|| <= grad_tol`` within ``budget`` units.

    The run also counts as converged when the line search stalls because the
    decrease it has to certify is below the rounding level of ``f`` (the
    value is then optimal to working precision even though ``||g||`` sits
    above ``grad_tol``). ``converged`` is False otherwise; callers should then
    leave the ``delta`` column empty.
    """
    from .exceptions import LineSearchFailure
    from .solvers import fncr_ls

    cfg = SolverConfig(grad_tol=grad_tol, oracle_budget=budget)
    problem = spec.build_problem()
    x0 = init_x0(problem.dim, spec.seed, spec.x0_scheme)
    res = fncr_ls(problem, x0, cfg)
    if res.status == CONVERGED:
        ok, reason = True, "grad_tol reached"
    elif isinstance(res.exception, LineSearchFailure) and res.exception.below_resolution:
        ok, reason = True, "stalled at the floating-point resolution of f"
    else:
        ok, reason = False, res.status if res.error is None else res.error
    return FStar(res.f, ok and math.isfinite(res.f), res.gnorm, res.units, reason)
