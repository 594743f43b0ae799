#!/usr/bin/env python3
"""Time the selective-scan kernels: pure numpy vs the compiled extension.

Runs forward and backward over a range of problem sizes, checks that the
backends agree, and prints the speedup.  Usage:

    python3 benchmarks/bench_scan.py [--repeats N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from dmsr.kernels import available_backends

SIZES = ((256, 8, 4), (1024, 16, 4), (4096, 32, 8))


def make_problem(length, d, n, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(length, d))
    delta = rng.uniform(0.05, 0.5, size=(length, d))
    b = rng.normal(size=(length, n))
    c = rng.normal(size=(length, n))
    a = -rng.uniform(0.2, 2.0, size=(d, n))
    d_skip = rng.normal(size=d)
    dy = rng.normal(size=(length, d))
    return x, delta, b, c, a, d_skip, dy


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    backends = available_backends()
    if "cython" not in backends:
        print("compiled kernel not built; timing numpy only "
              "(pip install -e . --no-build-isolation builds it)")

    header = (f"{'L':>6} {'D':>4} {'N':>3}  {'pass':<8}"
              + "".join(f"{name + ' [ms]':>14}" for name in backends)
              + ("" if len(backends) < 2 else f"{'speedup':>9}"))
    print(header)
    print("-" * len(header))
    for length, d, n in SIZES:
        x, delta, b, c, a, d_skip, dy = make_problem(length, d, n)
        results = {}
        times = {}
        for name, mod in backends.items():
            args_c = tuple(np.ascontiguousarray(v) for v in
                           (x, delta, b, c, a, d_skip))
            y, h = mod.scan_forward(*args_c)
            results[name] = (y, mod.scan_backward(*args_c, np.ascontiguousarray(h),
                                                  np.ascontiguousarray(dy)))
            times[name] = (
                best_of(lambda: mod.scan_forward(*args_c), args.repeats),
                best_of(lambda: mod.scan_backward(
                    *args_c, np.ascontiguousarray(h),
                    np.ascontiguousarray(dy)), args.repeats),
            )
        if len(backends) == 2:
            y_np, g_np = results["numpy"]
            y_cy, g_cy = results["cython"]
            worst = max(np.max(np.abs(y_np - y_cy))
                        / max(np.max(np.abs(y_np)), 1.0),
                        max(np.max(np.abs(u - v))
                            / max(np.max(np.abs(u)), 1.0)
                            for u, v in zip(g_np, g_cy)))
            assert worst < 1e-12, f"backend mismatch: rel {worst:.3e}"
        for idx, pass_name in enumerate(("forward", "backward")):
            row = f"{length:>6} {d:>4} {n:>3}  {pass_name:<8}"
            for name in backends:
                row += f"{times[name][idx] * 1e3:>14.3f}"
            if len(backends) == 2:
                row += (f"{times['numpy'][idx] / times['cython'][idx]:>8.1f}x")
            print(row)
    if len(backends) == 2:
        print("backends agree to < 1e-12")


if __name__ == "__main__":
    main()
