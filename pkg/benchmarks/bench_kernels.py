"""Compiled vs numpy kernels on pricing-sized inputs.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
Each kernel is checked for agreement before timing.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from swingcvx._kernels import _pykernels as py
from swingcvx._kernels import compiled


def _inputs(rng: np.random.Generator) -> dict:
    P, U, cmax = 100_000, 81, 6
    cont = np.cumsum(rng.standard_normal((P, U)), axis=1)
    lo = np.maximum(0, np.arange(U)[::-1] - 60).astype(np.int64)
    hi = np.minimum(cmax, U - 1 - np.arange(U)).astype(np.int64)
    u = rng.integers(0, U - cmax, P)
    nx, nq = 401, 32
    z = rng.standard_normal((20_000, 16))
    return {
        "bellman": ((rng.standard_normal(P), cont, lo, hi, 1.0, False), {}),
        "bellman_bang": ((rng.standard_normal(P), cont, lo, hi, 1.0, True), {}),
        "choose_controls": ((rng.standard_normal(P), rng.standard_normal((P, cmax + 1)), lo[u], hi[u], 1.0, False),
                            {}),
        "transition_matrix": ((-8.0, 16.0 / (nx - 1), np.linspace(-8, 8, nx)[:, None] + rng.normal(0, 0.3, (nx, nq)),
                               np.full(nq, 1.0 / nq)), {}),
        "euler_affine_paths": ((np.ones(20_000), np.full(16, -0.4), 0.0, np.full(16, 0.7), np.zeros(16), z,
                                1.0 / 16, 1.43), {}),
    }


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.allclose(np.asarray(a), np.asarray(b), rtol=1e-12, atol=1e-12, equal_nan=True)


def _time(func, args, kwargs, repeat: int) -> float:
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        func(*args, **kwargs)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    cy = compiled()
    if cy is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation` first")
        return 1
    cases = _inputs(np.random.default_rng(0))
    print(f"{'kernel':<20s} {'numpy [ms]':>11s} {'cython [ms]':>12s} {'speedup':>8s}")
    for name, (a, kw) in cases.items():
        kernel = name.removesuffix("_bang")
        f_py, f_cy = getattr(py, kernel), getattr(cy, kernel)
        if not _same(f_py(*a, **kw), f_cy(*a, **kw)):
            print(f"{name}: backends disagree")
            return 2
        t_py = _time(f_py, a, kw, args.repeat)
        t_cy = _time(f_cy, a, kw, args.repeat)
        print(f"{name:<20s} {1e3 * t_py:11.2f} {1e3 * t_cy:12.2f} {t_py / t_cy:8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
