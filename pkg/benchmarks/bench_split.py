"""Timing comparison of the compiled and pure-Python split-search kernels.

Runs the same sorted split scan through both implementations across a range of
leaf sizes, asserts they agree, and prints the per-call timings and speedup.

Usage: python3 benchmarks/bench_split.py [--repeats 200]
"""

import argparse
import timeit

import numpy as np

from mvboost import _splitcore_py
from mvboost.trees import HAVE_COMPILED_KERNEL

try:
    from mvboost import _splitcore
except ImportError:
    _splitcore = None


def check_agreement(rng, n_cases=300):
    for _ in range(n_cases):
        n = int(rng.integers(2, 500))
        xs = np.sort(np.round(rng.normal(size=n), 2))
        ys = np.ascontiguousarray(rng.normal(size=n))
        min_leaf = int(rng.integers(1, 5))
        a = _splitcore.best_split_sorted(xs, ys, min_leaf)
        b = _splitcore_py.best_split_sorted(xs, ys, min_leaf)
        if a is None or b is None:
            assert a == b, (a, b)
        else:
            assert a[0] == b[0], (a, b)
            assert abs(a[1] - b[1]) <= 1e-9 * max(1.0, abs(b[1])), (a, b)


def time_kernel(func, xs, ys, repeats):
    return timeit.timeit(lambda: func(xs, ys, 1), number=repeats) / repeats


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    if not HAVE_COMPILED_KERNEL or _splitcore is None:
        print("compiled kernel not available; nothing to compare")
        return

    rng = np.random.default_rng(0)
    check_agreement(rng)
    print("kernels agree on 300 random cases\n")

    print(f"{'n':>8}  {'compiled':>12}  {'pure py':>12}  {'speedup':>8}")
    for n in (100, 1000, 10000, 100000):
        xs = np.sort(rng.normal(size=n))
        ys = np.ascontiguousarray(rng.normal(size=n))
        t_c = time_kernel(_splitcore.best_split_sorted, xs, ys, args.repeats)
        t_p = time_kernel(_splitcore_py.best_split_sorted, xs, ys, args.repeats)
        print(f"{n:>8}  {t_c * 1e6:>10.1f}us  {t_p * 1e6:>10.1f}us  {t_p / t_c:>7.1f}x")


if __name__ == "__main__":
    main()
