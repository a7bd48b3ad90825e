"""Matrix-free objective interface, vector helpers, and oracle-unit accounting.

Vectors are 1-D ``float64`` numpy arrays. Cost accounting follows the usual
"oracle call" convention: one function value costs 1 unit, a gradient 1 unit,
and a Hessian-vector product 2 units.
"""

from dataclasses import dataclass

import numpy as np

try:
    import gmpy2
except ImportError:  # pragma: no cover - only needed for extended-precision runs
    gmpy2 = None

from . import _kernels
from .exceptions import DimensionMismatch, NonFiniteError, StaleRegularization

F_UNITS = 1
GRAD_UNITS = 1
HVP_UNITS = 2


def as_vec(x):
    """Return ``x`` as a finite, contiguous float64 vector (copying if needed)."""
    v = np.ascontiguousarray(x, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise DimensionMismatch(f"expected a non-empty 1-D vector, got shape {v.shape}")
    check_finite(v)
    return v


def _same_dim(a, b):
    if a.shape != b.shape:
        raise DimensionMismatch(f"dimension mismatch: {a.shape} vs {b.shape}")


def dot(a, b):
    _same_dim(a, b)
    if a.dtype == object or b.dtype == object:
        # extended-precision scalars (e.g. gmpy2.mpfr): plain sequential sum
        return np.dot(a, b)
    return _kernels.dot(a, b)


def norm(a):
    if a.dtype == object:
        return _object_sqrt(np.dot(a, a))
    return _kernels.norm(a)


def _object_sqrt(v):
    if gmpy2 is not None and isinstance(v, gmpy2.mpfr):
        return gmpy2.sqrt(v)  # ``v ** 0.5`` is ~30x slower for mpfr
    return v ** 0.5


def scale(a, x):
    return a * x


def add(x, y):
    _same_dim(x, y)
    return x + y


def axpy(a, x, y):
    """``a*x + y``."""
    _same_dim(x, y)
    return a * x + y


def check_finite(v, what="vector"):
    """Raise :class:`NonFiniteError` carrying the first bad index, else return ``v``."""
    if np.ndim(v) == 0:
        if not np.isfinite(v):
            raise NonFiniteError(None, what)
        return v
    idx = _kernels.first_nonfinite(np.ascontiguousarray(v, dtype=np.float64))
    if idx >= 0:
        raise NonFiniteError(idx, what)
    return v


@dataclass
class OracleCounter:
    f_evals: int = 0
    grad_evals: int = 0
    hvp_evals: int = 0

    @property
    def units(self):
        return F_UNITS * self.f_evals + GRAD_UNITS * self.grad_evals + HVP_UNITS * self.hvp_evals

    def count(self, kind, n=1):
        if kind == "f":
            self.f_evals += n
        elif kind == "grad":
            self.grad_evals += n
        elif kind == "hvp":
            self.hvp_evals += n
        else:
            raise ValueError(f"unknown oracle kind {kind!r}")
        return self

    def reset(self):
        self.f_evals = self.grad_evals = self.hvp_evals = 0

    def snapshot(self):
        return OracleCounter(self.f_evals, self.grad_evals, self.hvp_evals)


class Oracle:
    """Counted access to ``f``, ``grad`` and ``hvp`` of an objective.

    Subclasses implement ``_f``, ``_grad`` and ``_hvp``; the public methods
    do the bookkeeping and reject non-finite outputs.
    """

    dim = None

    def __init__(self, counter=None):
        self.counter = counter if counter is not None else OracleCounter()

    def f(self, x):
        self.counter.count("f")
        return float(check_finite(float(self._f(x)), "function value"))

    def grad(self, x):
        self.counter.count("grad")
        return check_finite(self._grad(x), "gradient")

    def hvp(self, x, v):
        self.counter.count("hvp")
        return check_finite(self._hvp(x, v), "Hessian-vector product")

    def _f(self, x):
        raise NotImplementedError

    def _grad(self, x):
        raise NotImplementedError

    def _hvp(self, x, v):
        raise NotImplementedError


class RegularizedOracle(Oracle):
    """Wraps an oracle and shifts its Hessian by a multiple of the identity.

    ``mode`` is one of

    * ``"none"``: products pass through;
    * ``"constant"``: ``H + h I`` with ``h = param > 0``;
    * ``"gradient_reg"``: ``H + sigma*sqrt(||g(x)||) I`` with ``sigma = param``.
      The shift is frozen by :meth:`freeze` at the current outer iterate and
      reused for every product at that point.

    The shift itself is a vector update and is not charged any oracle units.
    """

    MODES = ("none", "constant", "gradient_reg")

    def __init__(self, inner, mode="none", param=0.0):
        if mode not in self.MODES:
            raise ValueError(f"mode must be one of {self.MODES}")
        if mode == "constant" and not param > 0:
            raise ValueError("constant regularization needs h > 0")
        if mode == "gradient_reg" and not param >= 0:
            raise ValueError("gradient regularization needs sigma >= 0")
        super().__init__(inner.counter)
        self.inner = inner
        self.dim = inner.dim
        self.mode = mode
        self.param = float(param)
        self.cached_sqrt_g_norm = None
        self._frozen_x = None

    def freeze(self, x, gnorm):
        """Record ``sqrt(||g(x)||)`` for products at ``x``."""
        self._frozen_x = np.array(x, dtype=np.float64, copy=True)
        self.cached_sqrt_g_norm = float(np.sqrt(gnorm))

    @property
    def shift(self):
        if self.mode == "none":
            return 0.0
        if self.mode == "constant":
            return self.param
        if self.cached_sqrt_g_norm is None:
            raise StaleRegularization("gradient regularization used before freeze()")
        return self.param * self.cached_sqrt_g_norm

    def f(self, x):
        return self.inner.f(x)

    def grad(self, x):
        return self.inner.grad(x)

    def hvp(self, x, v):
        if self.mode == "gradient_reg":
            if self._frozen_x is None or not (
                x is self._frozen_x or np.array_equal(x, self._frozen_x)
            ):
                raise StaleRegularization("regularization was frozen at a different point")
        shift = self.shift
        hv = self.inner.hvp(x, v)
        return hv if shift == 0.0 else hv + shift * v


def regularized_hvp(ro, x, v):
    return ro.hvp(x, v)


class FunctionOracle(Oracle):
    """Oracle built from plain callables (handy for scalar tests and toy problems)."""

    def __init__(self, f, grad, hvp, dim, counter=None):
        super().__init__(counter)
        self._fn, self._gr, self._hv = f, grad, hvp
        self.dim = dim

    def _f(self, x):
        return self._fn(x)

    def _grad(self, x):
        return np.asarray(self._gr(x), dtype=np.float64)

    def _hvp(self, x, v):
        return np.asarray(self._hv(x, v), dtype=np.float64)
