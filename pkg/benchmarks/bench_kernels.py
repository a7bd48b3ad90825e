"""Time the numba kernels against their numpy counterparts.

    python benchmarks/bench_kernels.py [--repeat 7] [--skip-e2e]

Kernel timings are the best of ``--repeat`` batches after one warm-up call
(so numba compilation is excluded and reported on its own line). The
end-to-end rows run FNCR-LS on both fixtures in a fresh interpreter per
backend, selected through ``FNCR_BACKEND``.
"""

import argparse
import os
import subprocess
import sys
import time
import timeit

import numpy as np

from faithful_newton import _kernels as K
from faithful_newton.problems import make_synthetic, philox

E2E = """
import time
from faithful_newton.fixtures import FIXTURES
from faithful_newton.solvers import fncr_ls
for fx in FIXTURES.values():
    p, x0 = fx.problem(), fx.x0()
    fncr_ls(p, x0)  # warm-up (includes any JIT compilation)
    t = time.perf_counter()
    r = fncr_ls(fx.problem(), x0)
    print(fx.name, r.units, time.perf_counter() - t)
"""


def best_time(fn, repeat):
    fn()
    n, _ = timeit.Timer(fn).autorange()
    return min(timeit.Timer(fn).repeat(repeat, n)) / n


def kernel_cases(N, d, C):
    ds = make_synthetic(0, N, d, C, 2.0)
    rng = philox(1)
    A, y = ds.features, ds.labels
    W, V = rng.standard_normal((C, d)), rng.standard_normal((C, d))
    a, b = rng.standard_normal(C * d), rng.standard_normal(C * d)
    return {
        "dot": (lambda: K.dot_numba(a, b), lambda: K.dot_numpy(a, b)),
        "norm": (lambda: K.norm_numba(a), lambda: K.norm_numpy(a)),
        "ce_loss": (lambda: K.ce_loss_numba(A, y, W), lambda: K.ce_loss_numpy(A, y, W)),
        "ce_grad": (lambda: K.ce_grad_numba(A, y, W), lambda: K.ce_grad_numpy(A, y, W)),
        "ce_hvp": (lambda: K.ce_hvp_numba(A, W, V), lambda: K.ce_hvp_numpy(A, W, V)),
    }


def compile_seconds():
    """First-call cost of every numba kernel on fresh signatures (float32 inputs
    force a new specialisation even when the on-disk cache is warm)."""
    a = np.ones(8, dtype=np.float32)
    t = time.perf_counter()
    K.dot_numba(a, a)
    K.norm_numba(a)
    return time.perf_counter() - t


def end_to_end():
    rows = {}
    for backend in ("numba", "numpy"):
        env = dict(os.environ, FNCR_BACKEND=backend)
        out = subprocess.run([sys.executable, "-c", E2E], capture_output=True, text=True,
                             env=env, check=True)
        for line in out.stdout.split("\n"):
            if line.strip():
                name, units, secs = line.split()
                rows.setdefault(name, {})[backend] = (int(units), float(secs))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=7)
    ap.add_argument("--skip-e2e", action="store_true")
    args = ap.parse_args(argv)

    print(f"{'kernel':<10}{'shape':>16}{'numba us':>12}{'numpy us':>12}{'speedup':>10}")
    for N, d, C in ((50, 200, 2), (500, 20, 2), (5000, 50, 10)):
        for name, (fn_nb, fn_np) in kernel_cases(N, d, C).items():
            t_nb, t_np = best_time(fn_nb, args.repeat), best_time(fn_np, args.repeat)
            print(f"{name:<10}{f'{N}x{d}x{C}':>16}{t_nb * 1e6:12.2f}{t_np * 1e6:12.2f}{t_np / t_nb:10.2f}")
    print(f"numba specialisation of two small kernels: {compile_seconds():.3f}s")

    if not args.skip_e2e:
        print(f"\n{'fixture':<18}{'units':>8}{'numba s':>10}{'numpy s':>10}")
        for name, row in end_to_end().items():
            units = row["numba"][0]
            assert row["numpy"][0] == units, "backends disagree on oracle units"
            print(f"{name:<18}{units:>8}{row['numba'][1]:10.4f}{row['numpy'][1]:10.4f}")


if __name__ == "__main__":
    main()
