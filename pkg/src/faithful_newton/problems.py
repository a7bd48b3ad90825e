"""Objective functions, datasets and problem-constant estimators.

Random streams all come from ``numpy.random.Philox`` (the Philox-4x64
counter-based generator) keyed by an integer seed, so fixtures are
reproducible bit-for-bit on any platform that ships the same numpy stream.
"""

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .exceptions import (
    DatasetParseError,
    DimensionMismatch,
    EmptyDataset,
)
from .oracle import Oracle, as_vec, norm

log = logging.getLogger(__name__)


def philox(seed):
    """The repository-wide PRNG: Philox-4x64 keyed by ``seed``."""
    return np.random.Generator(np.random.Philox(int(seed)))


# ------------------------------------------------------------------ datasets

@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    raw_labels: list = field(default_factory=list)

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] < 1 or self.features.shape[1] < 1:
            raise EmptyDataset(f"features must be a non-empty N x d matrix, got {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise DimensionMismatch("one label per feature row is required")
        if self.n_classes < 2:
            raise ValueError("need at least two classes")
        if self.labels.min() < 0 or self.labels.max() >= self.n_classes:
            raise ValueError("labels must lie in [0, n_classes)")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features must be finite")

    @property
    def n_samples(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    def checksum(self):
        """SHA-256 over the little-endian feature and label bytes."""
        import hashlib

        h = hashlib.sha256()
        h.update(self.features.astype("<f8").tobytes())
        h.update(self.labels.astype("<i8").tobytes())
        h.update(str(self.n_classes).encode())
        return h.hexdigest()


def _remap(raw, n_classes=None):
    uniq = sorted(set(raw))
    lookup = {lab: i for i, lab in enumerate(uniq)}
    C = max(2, len(uniq)) if n_classes is None else int(n_classes)
    if len(uniq) > C:
        raise DatasetParseError(f"{len(uniq)} distinct labels but n_classes={C}")
    return np.array([lookup[lab] for lab in raw], dtype=np.int64), C, uniq


def _parse_label(tok, lineno):
    try:
        val = float(tok)
    except ValueError:
        raise DatasetParseError(f"bad label {tok!r}", lineno) from None
    if not math.isfinite(val) or val != int(val):
        raise DatasetParseError(f"label {tok!r} is not an integer", lineno)
    return int(val)


def parse_libsvm_line(line, n_features, lineno=None):
    """Parse ``"label idx:val ..."`` (1-based indices) into ``(raw_label, dense_row)``."""
    toks = line.split()
    if not toks:
        raise DatasetParseError("empty record", lineno)
    label = _parse_label(toks[0], lineno)
    row = np.zeros(n_features)
    for tok in toks[1:]:
        idx, sep, val = tok.partition(":")
        if not sep:
            raise DatasetParseError(f"expected index:value, got {tok!r}", lineno)
        try:
            j = int(idx)
            v = float(val)
        except ValueError:
            raise DatasetParseError(f"bad pair {tok!r}", lineno) from None
        if j < 1 or j > n_features:
            raise DatasetParseError(f"feature index {j} outside 1..{n_features}", lineno)
        if not math.isfinite(v):
            raise DatasetParseError(f"non-finite value in {tok!r}", lineno)
        row[j - 1] = v
    return label, row


def load_libsvm(path, n_features=None, n_classes=None):
    """Read a LIBSVM text file into a dense :class:`Dataset`.

    Blank lines and lines starting with ``#`` are skipped. When
    ``n_features`` is omitted it is the largest index seen. Raw labels are
    remapped to ``0..C-1`` in sorted order.
    """
    records = []
    max_idx = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            for tok in s.split()[1:]:
                idx = tok.partition(":")[0]
                try:
                    max_idx = max(max_idx, int(idx))
                except ValueError:
                    raise DatasetParseError(f"bad pair {tok!r}", lineno) from None
            records.append((lineno, s))
    if not records:
        raise EmptyDataset(f"{path}: no records")
    d = max_idx if n_features is None else int(n_features)
    if d < 1:
        raise DatasetParseError("no feature columns found")
    raw, rows = [], np.empty((len(records), d))
    for i, (lineno, s) in enumerate(records):
        lab, rows[i] = parse_libsvm_line(s, d, lineno)
        raw.append(lab)
    labels, C, uniq = _remap(raw, n_classes)
    return Dataset(rows, labels, C, uniq)


def save_libsvm(dataset, path, raw=True):
    """Write ``dataset`` in LIBSVM format (zeros omitted, 17 significant digits)."""
    labels = dataset.labels
    if raw and dataset.raw_labels:
        labels = [dataset.raw_labels[k] for k in dataset.labels]
    with open(path, "w") as fh:
        for lab, row in zip(labels, dataset.features):
            pairs = " ".join(f"{j + 1}:{v:.17g}" for j, v in enumerate(row) if v != 0.0)
            fh.write(f"{int(lab)} {pairs}".rstrip() + "\n")


def load_csv(path, n_classes=None):
    """Read comma-separated rows whose last column is the integer class label."""
    rows, raw = [], []
    width = None
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), 1):
            if not rec or all(not c.strip() for c in rec) or rec[0].lstrip().startswith("#"):
                continue
            if len(rec) < 2:
                raise DatasetParseError("need at least one feature and a label", lineno)
            if width is None:
                width = len(rec)
            elif len(rec) != width:
                raise DatasetParseError(f"expected {width} columns, got {len(rec)}", lineno)
            try:
                vals = [float(c) for c in rec[:-1]]
            except ValueError:
                raise DatasetParseError("non-numeric feature", lineno) from None
            if not all(math.isfinite(v) for v in vals):
                raise DatasetParseError("non-finite feature", lineno)
            rows.append(vals)
            raw.append(_parse_label(rec[-1].strip(), lineno))
    if not rows:
        raise EmptyDataset(f"{path}: no records")
    labels, C, uniq = _remap(raw, n_classes)
    return Dataset(np.array(rows), labels, C, uniq)


def make_synthetic(seed, N, d, C, separation):
    """Gaussian class blobs.

    Class centres are ``separation * z / sqrt(d)`` with ``z ~ N(0, I_d)``
    and each sample is its centre plus ``N(0, I_d / d)`` noise, so rows have
    norm close to ``sqrt(1 + separation**2)``. Labels are ``i mod C``
    shuffled. Everything is drawn from ``philox(seed)`` in that order.
    """
    if N < 1 or d < 1 or C < 2 or separation < 0:
        raise ValueError("need N >= 1, d >= 1, C >= 2, separation >= 0")
    rng = philox(seed)
    centres = separation * rng.standard_normal((C, d)) / math.sqrt(d)
    labels = rng.permutation(np.arange(N) % C)
    noise = rng.standard_normal((N, d)) / math.sqrt(d)
    return Dataset(centres[labels] + noise, labels, C)


# ------------------------------------------------------------------ problems

class CrossEntropyProblem(Oracle):
    """Summed multinomial cross-entropy plus ``mu * ||x||^2``.

    The parameter stacks one weight block per class,
    ``x = [x_1; ...; x_C]`` with ``x_j`` in R^d, so ``x.reshape(C, d)``
    gives the weight matrix. Each of f, grad and hvp is a single pass over
    the data; the Hessian is never formed.
    """

    def __init__(self, data, mu=0.0, counter=None):
        super().__init__(counter)
        if mu < 0:
            raise ValueError("mu must be >= 0")
        self.data = data
        self.mu = float(mu)
        self._A = data.features
        self._y = data.labels
        self.C = data.n_classes
        self.d = data.n_features
        self.dim = self.C * self.d

    def _W(self, x):
        if x.shape != (self.dim,):
            raise DimensionMismatch(f"expected dim {self.dim}, got {x.shape}")
        return np.ascontiguousarray(x).reshape(self.C, self.d)

    def _f(self, x):
        return _kernels.ce_loss(self._A, self._y, self._W(x)) + self.mu * _kernels.dot(x, x)

    def _grad(self, x):
        G = _kernels.ce_grad(self._A, self._y, self._W(x)).ravel()
        return G + 2.0 * self.mu * x if self.mu else G

    def _hvp(self, x, v):
        HV = _kernels.ce_hvp(self._A, self._W(x), self._W(v)).ravel()
        return HV + 2.0 * self.mu * v if self.mu else HV


class QuadraticProblem(Oracle):
    """``f(x) = 0.5 <x, A x> - <b, x>`` with ``A`` symmetric positive definite."""

    def __init__(self, A, b, counter=None):
        super().__init__(counter)
        A = np.array(A, dtype=np.float64)
        b = as_vec(b)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] != b.size:
            raise DimensionMismatch("A must be square and match b")
        if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
            raise ValueError("A must be symmetric")
        A = 0.5 * (A + A.T)
        eig = np.linalg.eigvalsh(A)
        if eig[0] <= 0:
            raise ValueError(f"A must be positive definite (min eigenvalue {eig[0]:.3g})")
        self.A, self.b = A, b
        self.eigenvalues = eig
        self.dim = b.size
        self.known_solution = np.linalg.solve(A, b)

    @property
    def f_star(self):
        return -0.5 * float(self.b @ self.known_solution)

    def _f(self, x):
        return 0.5 * _kernels.dot(x, self.A @ x) - _kernels.dot(self.b, x)

    def _grad(self, x):
        return self.A @ x - self.b

    def _hvp(self, x, v):
        return self.A @ v


def spd_spectrum(rng, d, cond=1.0, distinct=None, eig_low=1.0):
    """Eigenvalues for :func:`random_spd`: log-spaced between ``eig_low`` and
    ``eig_low * cond`` with random interior points; with ``distinct=k`` only
    ``k`` distinct values are used (the rest repeat them at random)."""
    k = d if distinct is None else int(distinct)
    if not 1 <= k <= d:
        raise ValueError("distinct must be in [1, d]")
    if k == 1:
        levels = np.array([eig_low])
    else:
        inner = np.sort(rng.uniform(0.0, 1.0, k - 2))
        levels = eig_low * cond ** np.concatenate(([0.0], inner, [1.0]))
    return np.concatenate((levels, rng.choice(levels, d - k))) if d > k else levels


def random_spd(rng, d, cond=1.0, distinct=None, eig_low=1.0):
    """Random SPD matrix ``Q diag(lam) Q^T`` with ``lam`` from :func:`spd_spectrum`
    and ``Q`` from the QR factorization of a Gaussian matrix."""
    lam = spd_spectrum(rng, d, cond, distinct, eig_low)
    Q, R = np.linalg.qr(rng.standard_normal((d, d)))
    Q = Q * np.sign(np.diag(R))
    A = (Q * lam) @ Q.T
    return 0.5 * (A + A.T)


def random_quadratic(seed, d, cond=1.0, distinct=None):
    rng = philox(seed)
    A = random_spd(rng, d, cond, distinct)
    return QuadraticProblem(A, rng.standard_normal(d))


# ------------------------------------------------------- constant estimation

@dataclass
class ProblemInfo:
    mu_est: float
    lmax_est: float
    LH_est: float
    f_star_ref: float = None
    converged: bool = True

    @property
    def kappa_est(self):
        return self.lmax_est / self.mu_est


@dataclass
class SpectrumEstimate:
    mu_est: float
    lmax_est: float
    converged: bool
    iterations: int


def _power(apply, v, max_iter, tol):
    lam = 0.0
    for it in range(1, max_iter + 1):
        w = apply(v)
        lam_new = float(v @ w)
        nw = norm(w)
        if nw == 0.0:
            return 0.0, True, it
        v = w / nw
        if it > 1 and abs(lam_new - lam) <= tol * abs(lam_new):
            return lam_new, True, it
        lam = lam_new
    return lam, False, max_iter


def estimate_spectrum(oracle, x, max_iter=200, tol=1e-6, seed=0):
    """Extreme Hessian eigenvalues at ``x`` by power iteration.

    ``lmax`` comes from power iteration on ``H``; ``mu`` from power iteration
    on ``lmax I - H``. Each stage is capped at ``max_iter`` products and stops
    when the Rayleigh quotient changes by less than ``tol`` relatively.
    Non-convergence is logged and reported, the estimates are still returned.
    """
    x = as_vec(x)
    rng = philox(seed)
    v = rng.standard_normal(x.size)
    v /= norm(v)
    lmax, ok1, n1 = _power(lambda u: oracle.hvp(x, u), v, max_iter, tol)
    v = rng.standard_normal(x.size)
    v /= norm(v)
    top, ok2, n2 = _power(lambda u: lmax * u - oracle.hvp(x, u), v, max_iter, tol)
    mu = lmax - top
    if not (ok1 and ok2):
        log.warning("power iteration did not converge (lmax %s, shifted %s)", ok1, ok2)
    return SpectrumEstimate(mu, lmax, ok1 and ok2, n1 + n2)


def estimate_LH(oracle, centres, radius, n_pairs=100, seed=0, power_starts=4,
                power_iter=50, fd_step=1e-4):
    """Sampled Hessian-Lipschitz constant.

    Returns the largest ratio ``||hvp(x,v) - hvp(y,v)|| / (||x-y|| ||v||)``
    seen over two kinds of pairs around each centre:

    * ``n_pairs`` random triples, half spread over the ball of the given
      radius and half close pairs at distance ``1e-3*radius``;
    * adaptively chosen symmetric pairs ``x, y = c +- h v`` where ``v`` is
      driven by a tensor power iteration ``v <- T[v,v,.] / ||T[v,v,.]||``
      on the third derivative ``T``, itself approximated by the central
      difference of Hessian products (``h = fd_step * max(1, ||c||)``). For
      a symmetric tensor the fixed point maximizes ``|T[v,v,v]|``, which is
      the local operator norm of the Hessian's derivative. Random
      directions rarely line up with the few data directions along which
      cross-entropy curvature changes, so this part usually dominates.

    Either way the result is a lower bound on the true constant.
    """
    rng = philox(seed)
    best = 0.0
    for c in np.atleast_2d(centres):
        c = as_vec(c)
        n = c.size
        for i in range(n_pairs):
            u = rng.standard_normal(n)
            x = c + radius * rng.uniform() * u / norm(u)
            w = rng.standard_normal(n)
            step = radius * (rng.uniform() if i % 2 == 0 else 1e-3)
            y = x + step * w / norm(w)
            v = rng.standard_normal(n)
            diff = oracle.hvp(x, v) - oracle.hvp(y, v)
            best = max(best, norm(diff) / (norm(x - y) * norm(v)))
        h = fd_step * max(1.0, norm(c))
        for _ in range(power_starts):
            v = rng.standard_normal(n)
            v /= norm(v)
            prev = 0.0
            for _ in range(power_iter):
                w = (oracle.hvp(c + h * v, v) - oracle.hvp(c - h * v, v)) / (2.0 * h)
                nw = norm(w)
                best = max(best, nw)
                if nw == 0.0 or abs(nw - prev) <= 1e-6 * nw:
                    break
                prev = nw
                v = w / nw
    return best
