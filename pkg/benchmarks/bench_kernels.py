"""Compiled vs numpy backends for the two hot kernels.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
Prints wall time per call and the max difference between backends.
"""
import argparse
import time

import numpy as np

from sphere_euler import _kernels_py
from sphere_euler.fields import ChartGrid, PAD, fractional_indices, padded

try:
    from sphere_euler import _kernels as _compiled
except ImportError:
    _compiled = None


def timeit(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def direct_case(n_phi=128, n_theta=64, n_targets=400, seed=0):
    ch = ChartGrid(n_phi, n_theta)
    src = ch.xyz().reshape(-1, 3)
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(len(src)) * ch.weights.ravel()
    tx = rng.standard_normal((n_targets, 3))
    tx /= np.linalg.norm(tx, axis=1)[:, None]
    delta = 2 * ch.diagonal
    return tx, src, w, delta, delta


def sample_case(n_phi=256, n_theta=128, n_pts=200_000, seed=0):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((n_theta, n_phi))
    phi = rng.uniform(-np.pi, np.pi, n_pts)
    theta = rng.uniform(-np.pi / 2, np.pi / 2, n_pts)
    u, w = fractional_indices(n_phi, n_theta, phi, theta, PAD)
    return padded(v), u, w


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    cases = {
        "direct_velocity": (direct_case(), "direct_velocity"),
        "sample_padded": (sample_case() + (1, 1), "sample_padded"),
    }
    print(f"{'kernel':<18}{'numpy [s]':>12}{'cython [s]':>12}{'speedup':>10}{'max diff':>12}")
    for name, (arg, fn) in cases.items():
        tp, outp = timeit(lambda: getattr(_kernels_py, fn)(*arg), args.repeat)
        if _compiled is None:
            print(f"{name:<18}{tp:12.4f}{'n/a':>12}{'':>10}{'':>12}")
            continue
        tc, outc = timeit(lambda: getattr(_compiled, fn)(*arg), args.repeat)
        diff = float(np.max(np.abs(np.asarray(outp) - np.asarray(outc))))
        print(f"{name:<18}{tp:12.4f}{tc:12.4f}{tp / tc:10.1f}{diff:12.2e}")


if __name__ == "__main__":
    main()
