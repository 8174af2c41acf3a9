"""Benchmark: compiled hash kernels vs the pure-numpy fallback.

The keyed hash dominates runtime everywhere (one vocabulary-wide evaluation
per decoding step, one per scored position at detection), so this is the
number that matters.  Run:

    python benchmarks/bench_hash.py
"""

import time

import numpy as np

from inkwell import constants
from inkwell.kernels import numpy_backend

try:
    from inkwell.kernels import _hashcore
except ImportError:
    _hashcore = None

ARGS = dict(
    p2=constants.P2,
    p4=constants.P4,
    mix1=constants.MIX_PRIMES[0],
    mix2=constants.MIX_PRIMES[1],
    shift=constants.SHIFT,
    mask=constants.MODULUS - 1,
)
QS = np.asarray(constants.WINDOW_PRIMES[:2], dtype=np.uint64)


def timeit(fn, *args, repeats=7, **kwargs):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args, **kwargs)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_candidates(backend, n):
    rng = np.random.default_rng(0)
    tokens = rng.integers(0, 2**20, n).astype(np.uint64)
    return timeit(backend.hash_candidates, tokens, 123456789, **ARGS)


def bench_positions(backend, n):
    rng = np.random.default_rng(1)
    tokens = rng.integers(0, 2**20, n).astype(np.uint64)
    windows = rng.integers(0, 2**20, (n, 2)).astype(np.uint64)
    return timeit(backend.hash_positions, tokens, windows, 987654321, QS, **ARGS)


def main():
    print(f"{'kernel':<16} {'size':>9} {'numpy':>12} {'cython':>12} {'speedup':>8}")
    for name, bench in (("candidates", bench_candidates), ("positions", bench_positions)):
        for n in (1_000, 100_000, 5_000_000):
            t_np = bench(numpy_backend, n)
            if _hashcore is not None:
                t_cy = bench(_hashcore, n)
                ratio = f"{t_np / t_cy:7.2f}x"
                cy_txt = f"{t_cy * 1e6:10.1f}us"
            else:
                cy_txt, ratio = "   not built", "       -"
            print(f"{name:<16} {n:>9,} {t_np * 1e6:10.1f}us {cy_txt} {ratio}")
    if _hashcore is None:
        print("\ncompiled extension missing; install with Cython available to compare")


if __name__ == "__main__":
    main()
