"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py              # kernel pairs, in process
    python3 benchmarks/bench_kernels.py --pipeline   # also a CNP fit per backend

Kernel timings call both ``*_nb`` and ``*_np`` directly, after one warm-up
call so numba compilation is excluded. The pipeline timing runs a fresh
interpreter per backend, toggling ``CYLCOP_DISABLE_NUMBA``.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from cylcop import _kernels as K
from cylcop._accel import NUMBA_ENABLED
from cylcop.circular import TWO_PI, cumulative_table
from cylcop.copulas import BandwidthMatrix, reflect_points


def _cases(n, rng):
    theta = np.sort(rng.vonmises(0.0, 2.0, n) % TWO_PI)
    grid = np.linspace(0.0, TWO_PI, 512)
    table, slopes, step = cumulative_table(20.0)
    u, v = rng.random((2, n))
    rows_u, rows_v = reflect_points(u, v)
    order = np.argsort(rows_u.ravel())
    img_u, img_v = rows_u.ravel()[order], rows_v.ravel()[order]
    var, cov = BandwidthMatrix(0.05, 0.02).covariance
    gu, gv = (a.ravel() for a in np.meshgrid(np.linspace(0, 1, 64), np.linspace(0, 1, 64)))
    x = rng.normal(size=n)
    return {
        "shifted_cdf_mean": (grid, theta, table, slopes, step),
        "vm_kernel_sum": (grid, theta, 20.0),
        "loo_row_sums": (theta, 20.0, K.loo_window(20.0)),
        "pair_distance_counts": (x, 401),
        "copula_kde": (gu, gv, img_u, img_v, var, cov),
        "copula_conditional": (gu, gv, img_u, img_v, var, cov),
        "rotated_difference_histogram": (u, v, rows_u, rows_v, 1417, 2.0 * np.sqrt(2.0)),
    }


def bench_kernels(n, repeat, seed=0):
    rng = np.random.default_rng(seed)
    rows = []
    for name, args in _cases(n, rng).items():
        nb, npy = getattr(K, name + "_nb"), getattr(K, name + "_np")
        nb(*args)  # compile
        t_nb = min(timeit.repeat(lambda: nb(*args), number=1, repeat=repeat))
        t_np = min(timeit.repeat(lambda: npy(*args), number=1, repeat=repeat))
        rows.append((name, t_nb, t_np))
    return rows


_PIPELINE = """
import time, numpy as np
from cylcop import make_example_density, simulate, fit_joint, backend
s = simulate(make_example_density(1), {n}, 1)
fit_joint(s, "CNP")  # warm-up / compile
t = time.perf_counter(); m = fit_joint(s, "CNP")
g = np.linspace(0, 6.28, 100); m.density_grid(g, np.linspace(-4, 4, 100))
print(backend(), time.perf_counter() - t)
"""


def bench_pipeline(n):
    out = []
    for flag in ("0", "1"):
        env = dict(os.environ, CYLCOP_DISABLE_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", _PIPELINE.format(n=n)], env=env,
                             capture_output=True, text=True, check=True)
        name, secs = res.stdout.split()
        out.append((name, float(secs)))
    return out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=1000, help="sample size (default 1000)")
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--pipeline", action="store_true", help="also time a CNP fit per backend")
    args = p.parse_args(argv)
    if not NUMBA_ENABLED:
        print("numba disabled: the *_nb columns time uncompiled python loops", file=sys.stderr)
    print(f"{'kernel':<30}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>9}")
    for name, t_nb, t_np in bench_kernels(args.n, args.repeat):
        print(f"{name:<30}{1e3 * t_nb:>12.2f}{1e3 * t_np:>12.2f}{t_np / t_nb:>9.1f}")
    if args.pipeline:
        print(f"\nCNP fit + 100x100 grid, n={args.n}")
        for name, secs in bench_pipeline(args.n):
            print(f"  {name:<8}{secs:8.3f} s")


if __name__ == "__main__":
    main()
