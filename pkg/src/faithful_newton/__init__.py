"""Faithful-Newton optimizers built on an instrumented Conjugate Residual solver."""

__version__ = "0.1.0"
