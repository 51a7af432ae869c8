"""Compare the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Each kernel runs on both backends with the same inputs. The last column is the
largest relative difference between the two outputs: 0 for the GEMM and LUT
kernels, a few ulp for dge_correction where libm and numpy pow round differently.
"""

import argparse
import time

import numpy as np

from fp4sim import kernels
from fp4sim.dge import DgeConfig
from fp4sim.formats import E2M1


def _cases(rng):
    a, b = rng.standard_normal((256, 256)), rng.standard_normal((256, 192))
    ba, bb = rng.standard_normal((8, 64, 32)), rng.standard_normal((8, 32, 64))
    x = rng.uniform(-6, 6, 1 << 18)
    # COO entries in row-major order, as np.nonzero produces them
    rows, cols = np.nonzero(rng.random((256, 256)) < 0.03)
    vals = rng.standard_normal(rows.size)
    cfg = DgeConfig()
    grid = E2M1.values
    return {
        "gemm 256x256x192": lambda: kernels.gemm(a, b),
        "bmm 8x64x32x64": lambda: kernels.bmm(ba, bb),
        "coo_gemm 3% dense": lambda: kernels.coo_gemm(rows, cols, vals, b, 256),
        "lut_index 262144": lambda: kernels.lut_index(x, E2M1.thresholds),
        "dge_correction 262144": lambda: kernels.dge_correction(x, grid, cfg.k, cfg.clip_cap, cfg.epsilon),
    }


def _time(fn, repeat):
    fn()
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    try:
        kernels.use_backend("cython")
    except ImportError:
        print("compiled extension not built; nothing to compare")
        return 1
    cases = _cases(np.random.default_rng(0))
    print(f"{'kernel':<24}{'cython ms':>12}{'python ms':>12}{'ratio':>9}{'max rel diff':>14}")
    for name, fn in cases.items():
        kernels.use_backend("cython")
        out_c, t_c = np.asarray(fn()), _time(fn, args.repeat)
        kernels.use_backend("python")
        out_p, t_p = np.asarray(fn()), _time(fn, args.repeat)
        diff = np.max(np.abs(out_c - out_p) / np.maximum(np.abs(out_p), 1e-300))
        print(f"{name:<24}{1e3 * t_c:>12.3f}{1e3 * t_p:>12.3f}{t_p / t_c:>9.2f}{diff:>14.1e}")
    kernels.use_backend("cython")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
