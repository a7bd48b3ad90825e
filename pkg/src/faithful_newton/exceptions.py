"""Exception hierarchy shared by every solver component."""


class FNCRError(Exception):
    """Base class for all library errors."""


class DimensionMismatch(FNCRError, ValueError):
    pass


class NonFiniteError(FNCRError, FloatingPointError):
    """A vector or scalar contains NaN/Inf.

    ``index`` is the first offending position (``None`` for scalars).
    """

    def __init__(self, index=None, what="vector"):
        self.index = index
        loc = "" if index is None else f" at index {index}"
        super().__init__(f"non-finite value in {what}{loc}")


class ZeroGradient(FNCRError):
    """The inner solver was called with g == 0."""


class OperatorNotPD(FNCRError):
    """Krylov solver met a non-positive curvature value."""


class Breakdown(FNCRError):
    """Krylov solver direction collapsed (||Hp||^2 below 1e-300)."""


class LineSearchFailure(FNCRError):
    """Backtracking ran out of trials.

    ``required`` is the decrease the first trial had to certify
    (``rho * eta0 * |<g, s>|``) and ``fx`` the value at the base point.
    """

    def __init__(self, msg, required=None, fx=None):
        self.required, self.fx = required, fx
        super().__init__(msg)

    @property
    def below_resolution(self):
        """True when even the first trial asked for a decrease that rounding in
        ``f`` cannot resolve, i.e. the iterate is optimal to working precision."""
        if self.required is None or self.fx is None:
            return False
        return self.required <= 8.0 * 2.0**-52 * max(abs(self.fx), 2.0**-1022)


class StaleRegularization(FNCRError):
    """Gradient-regularized product requested at a point other than the frozen iterate."""


class EmptyDataset(FNCRError, ValueError):
    pass


class DatasetParseError(FNCRError, ValueError):
    def __init__(self, msg, line=None):
        self.line = line
        super().__init__(msg if line is None else f"line {line}: {msg}")


class ConfigError(FNCRError, ValueError):
    pass


class NotDescent(FNCRError, ValueError):
    """A step with <g, d> >= 0 was passed where a descent direction is required."""
