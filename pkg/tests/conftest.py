import numpy as np
import pytest

from faithful_newton.oracle import FunctionOracle
from faithful_newton.problems import QuadraticProblem

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def unit_quadratic(dim=1):
    """f(x) = 0.5 ||x||^2 as a counted oracle."""
    return FunctionOracle(lambda x: 0.5 * float(x @ x), lambda x: x.copy(),
                          lambda x, v: v.copy(), dim)


def diag_quadratic(diag, b=None):
    diag = np.asarray(diag, dtype=float)
    b = np.zeros_like(diag) if b is None else np.asarray(b, dtype=float)
    return QuadraticProblem(np.diag(diag), b)


@pytest.fixture
def unit_quad():
    return unit_quadratic


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
