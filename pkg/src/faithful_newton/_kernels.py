"""Hot numeric kernels with a numba path and a pure-numpy path.

The backend is picked once at import time from ``FNCR_BACKEND``:

* ``numba`` (default when numba imports): ``@njit`` loops with a fixed
  sequential summation order, so results are bit-reproducible.
* ``numpy``: vectorised numpy/BLAS expressions. Deterministic within a
  process for identical inputs, but the reduction order is BLAS-defined.

Both implementations are always importable as ``*_numba`` / ``*_numpy`` so
tests and the benchmark can compare them directly.
"""

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

_requested = os.environ.get("FNCR_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"FNCR_BACKEND must be 'numba' or 'numpy', got {_requested!r}")
BACKEND = "numba" if (_requested == "numba" and HAVE_NUMBA) else "numpy"


# ---------------------------------------------------------------- numpy path

def dot_numpy(a, b):
    return float(np.dot(a, b))


def norm_numpy(a):
    return float(np.sqrt(np.dot(a, a)))


def first_nonfinite_numpy(a):
    bad = np.flatnonzero(~np.isfinite(a))
    return int(bad[0]) if bad.size else -1


def _softmax_rows(Z):
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True), Z, E


def ce_loss_numpy(A, y, W):
    """Summed softmax cross-entropy for weights ``W`` of shape (C, d)."""
    Z = A @ W.T
    zmax = Z.max(axis=1)
    lse = zmax + np.log(np.exp(Z - zmax[:, None]).sum(axis=1))
    return float(np.sum(lse - Z[np.arange(Z.shape[0]), y]))


def ce_grad_numpy(A, y, W):
    P, _, _ = _softmax_rows(A @ W.T)
    P[np.arange(P.shape[0]), y] -= 1.0
    return P.T @ A


def ce_hvp_numpy(A, W, V):
    P, _, _ = _softmax_rows(A @ W.T)
    U = A @ V.T
    M = P * (U - np.sum(P * U, axis=1, keepdims=True))
    return M.T @ A


# ---------------------------------------------------------------- numba path

if HAVE_NUMBA:

    @njit(cache=True)
    def dot_numba(a, b):
        acc = 0.0
        for i in range(a.shape[0]):
            acc += a[i] * b[i]
        return acc

    @njit(cache=True)
    def norm_numba(a):
        acc = 0.0
        for i in range(a.shape[0]):
            acc += a[i] * a[i]
        return np.sqrt(acc)

    @njit(cache=True)
    def first_nonfinite_numba(a):
        for i in range(a.shape[0]):
            if not np.isfinite(a[i]):
                return i
        return -1

    @njit(cache=True)
    def _row_softmax(A, W, i, z, p):
        C, d = W.shape
        zmax = -np.inf
        for j in range(C):
            acc = 0.0
            for k in range(d):
                acc += A[i, k] * W[j, k]
            z[j] = acc
            if acc > zmax:
                zmax = acc
        tot = 0.0
        for j in range(C):
            p[j] = np.exp(z[j] - zmax)
            tot += p[j]
        for j in range(C):
            p[j] /= tot
        return zmax, tot

    @njit(cache=True)
    def ce_loss_numba(A, y, W):
        N = A.shape[0]
        C = W.shape[0]
        z = np.empty(C)
        p = np.empty(C)
        loss = 0.0
        for i in range(N):
            zmax, tot = _row_softmax(A, W, i, z, p)
            loss += zmax + np.log(tot) - z[y[i]]
        return loss

    @njit(cache=True)
    def ce_grad_numba(A, y, W):
        N, d = A.shape
        C = W.shape[0]
        G = np.zeros((C, d))
        z = np.empty(C)
        p = np.empty(C)
        for i in range(N):
            _row_softmax(A, W, i, z, p)
            p[y[i]] -= 1.0
            for j in range(C):
                c = p[j]
                for k in range(d):
                    G[j, k] += c * A[i, k]
        return G

    @njit(cache=True)
    def ce_hvp_numba(A, W, V):
        N, d = A.shape
        C = W.shape[0]
        out = np.zeros((C, d))
        z = np.empty(C)
        p = np.empty(C)
        u = np.empty(C)
        for i in range(N):
            _row_softmax(A, W, i, z, p)
            pu = 0.0
            for j in range(C):
                acc = 0.0
                for k in range(d):
                    acc += A[i, k] * V[j, k]
                u[j] = acc
                pu += p[j] * acc
            for j in range(C):
                c = p[j] * (u[j] - pu)
                for k in range(d):
                    out[j, k] += c * A[i, k]
        return out

else:  # pragma: no cover
    dot_numba = dot_numpy
    norm_numba = norm_numpy
    first_nonfinite_numba = first_nonfinite_numpy
    ce_loss_numba = ce_loss_numpy
    ce_grad_numba = ce_grad_numpy
    ce_hvp_numba = ce_hvp_numpy


if BACKEND == "numba":
    dot, norm, first_nonfinite = dot_numba, norm_numba, first_nonfinite_numba
    ce_loss, ce_grad, ce_hvp = ce_loss_numba, ce_grad_numba, ce_hvp_numba
else:
    dot, norm, first_nonfinite = dot_numpy, norm_numpy, first_nonfinite_numpy
    ce_loss, ce_grad, ce_hvp = ce_loss_numpy, ce_grad_numpy, ce_hvp_numpy
