"""Compiled vs numpy max-plus step (the oracle's dynamic-programming kernel).

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import time

import numpy as np

from spectra import _pykernels

try:
    from spectra import _ckernels
except ImportError:  # pragma: no cover
    _ckernels = None


def best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def cases(rng):
    for L, K in [(25, 2), (50, 2), (9, 3), (15, 3)]:
        shape = (L,) * K
        n = L ** K
        V = rng.normal(size=n)
        V[rng.random(n) < 0.1] = -np.inf
        G = rng.normal(size=n)
        yield f"maxplus L={L} K={K}", "maxplus_step", (V, G, shape)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'case':<24}{'numpy [ms]':>12}{'cython [ms]':>13}{'speedup':>9}")
    for label, name, inputs in cases(rng):
        py = best_of(lambda: getattr(_pykernels, name)(*inputs), args.repeat)
        if _ckernels is None:
            print(f"{label:<24}{py * 1e3:>12.2f}{'n/a':>13}{'':>9}")
            continue
        cy = best_of(lambda: getattr(_ckernels, name)(*inputs), args.repeat)
        a = getattr(_pykernels, name)(*inputs)
        b = getattr(_ckernels, name)(*inputs)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1]), label
        print(f"{label:<24}{py * 1e3:>12.2f}{cy * 1e3:>13.2f}{py / cy:>8.1f}x")


if __name__ == "__main__":
    main()
