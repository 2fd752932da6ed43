#!/usr/bin/env python3
"""Benchmark the compiled kernels against the NumPy fallback.

Usage: python benchmarks/bench_kernels.py [--size 768] [--repeats 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from handmend._kernels import pure

try:
    from handmend._kernels import _native as native
except ImportError:
    native = None


def _time(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--size", type=int, default=768)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    n = args.size
    src = rng.integers(0, 65536, (n, n), dtype=np.uint16)
    lin = np.array([[0.9, 0.1], [-0.1, 0.9]])
    off = np.array([3.0, -2.0])
    x = rng.uniform(0, 255, (n, n))
    y = rng.uniform(0, 255, (n, n))
    kernel = np.exp(-(np.arange(-5, 6, dtype=np.float64) ** 2) / (2 * 1.5**2))
    kernel /= kernel.sum()
    c1, c2 = (0.01 * 255) ** 2, (0.03 * 255) ** 2

    backends = [("python", pure)] + ([("native", native)] if native else [])
    rows = []
    for name, impl in backends:
        warp = _time(lambda: impl.warp_bilinear_u16(src, lin, off, n, n), args.repeats)
        ssim = _time(lambda: impl.ssim_map(x, y, kernel, c1, c2), args.repeats)
        rows.append((name, warp, ssim))

    print(f"kernel benchmark at {n}x{n} (best of {args.repeats})")
    print(f"{'backend':<10}{'warp_bilinear_u16':>20}{'ssim_map':>14}")
    for name, warp, ssim in rows:
        print(f"{name:<10}{warp * 1e3:>17.1f} ms{ssim * 1e3:>11.1f} ms")
    if native and len(rows) == 2:
        print(
            f"{'speedup':<10}{rows[0][1] / rows[1][1]:>18.1f}x{rows[0][2] / rows[1][2]:>12.1f}x"
        )

    if native:
        same_warp = np.array_equal(
            pure.warp_bilinear_u16(src, lin, off, n, n),
            native.warp_bilinear_u16(src, lin, off, n, n),
        )
        ssim_delta = float(
            np.abs(
                pure.ssim_map(x, y, kernel, c1, c2) - native.ssim_map(x, y, kernel, c1, c2)
            ).max()
        )
        print(f"agreement: warp bit-identical={same_warp}, ssim max |delta|={ssim_delta:.2e}")


if __name__ == "__main__":
    main()
