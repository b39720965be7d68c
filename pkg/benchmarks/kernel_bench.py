"""Benchmark the jitted kernels against the pure-numpy fallback.

Runs each hot kernel under both backends on a few representative shapes
and prints median seconds plus the speedup. The first jitted call pays
compilation; warm-up iterations absorb it.

    python3 benchmarks/kernel_bench.py [--iterations N] [--batch N]
"""

from __future__ import annotations

import argparse

import numpy as np

from vmcbench import kernels
from vmcbench.bench.walltime import time_callable
from vmcbench.core.rng import RNGPolicy


def _cases(batch: int):
    rng = RNGPolicy(0)
    gen = rng.generator("bench/kernels")
    x32 = gen.standard_normal((batch, 9, 32, 32)).astype(np.float32)
    u84 = gen.integers(0, 256, (batch, 9, 84, 84), dtype=np.uint8)
    imgs = gen.random((batch, 3, 84, 84))
    bf, cf, sf = (gen.uniform(0.6, 1.4, batch) for _ in range(3))
    hf = gen.uniform(-0.5, 0.5, batch)
    dx = gen.integers(0, 9, batch).astype(np.int64)
    dy = gen.integers(0, 9, batch).astype(np.int64)
    cols = kernels.im2col(x32, 3, 3, 2, 1)
    n, c, h, w = x32.shape

    return [
        ("im2col 3x3 s2", lambda: kernels.im2col(x32, 3, 3, 2, 1)),
        ("col2im 3x3 s2", lambda: kernels.col2im(cols, n, c, h, w, 3, 3, 2, 1)),
        ("shift pad4 84px", lambda: kernels.shift_gather(u84, dx, dy, 4)),
        ("jitter 84px", lambda: kernels.jitter_apply(imgs, bf, cf, sf, hf)),
    ]


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--iterations", type=int, default=30)
    parser.add_argument("--batch", type=int, default=64)
    args = parser.parse_args()

    if not kernels.HAS_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    results = {}
    for backend in ("numpy", "numba"):
        kernels.set_backend(backend)
        for name, fn in _cases(args.batch):
            timing = time_callable(fn, args.iterations)
            results.setdefault(name, {})[backend] = timing["median_s"]

    print(f"{'kernel':<18} {'numpy (s)':>12} {'numba (s)':>12} {'speedup':>9}")
    for name, row in results.items():
        speed = row["numpy"] / row["numba"]
        print(f"{name:<18} {row['numpy']:>12.6f} {row['numba']:>12.6f} {speed:>8.1f}x")
    kernels.set_backend("auto")


if __name__ == "__main__":
    main()
