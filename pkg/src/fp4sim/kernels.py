"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise the numpy fallback
takes over. Setting ``FP4SIM_PURE_PYTHON=1`` forces the fallback.
"""

import os

import numpy as np

from . import _fallback

BACKEND = "python"
_impl = _fallback

if os.environ.get("FP4SIM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build
        _impl = _fallback


def _c(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def gemm(a, b):
    return _impl.gemm(_c(a), _c(b))


def bmm(a, b):
    return _impl.bmm(_c(a), _c(b))


def coo_gemm(rows, cols, vals, b, nrows):
    return _impl.coo_gemm(np.ascontiguousarray(rows, dtype=np.intp),
                          np.ascontiguousarray(cols, dtype=np.intp), _c(vals), _c(b), int(nrows))


def lut_index(x, thresholds):
    x = _c(x)
    return _impl.lut_index(x.ravel(), _c(thresholds)).reshape(x.shape)


def dge_correction(x, grid, k, clip_cap, epsilon):
    x = _c(x)
    out = _impl.dge_correction(x.ravel(), _c(grid), float(k), float(clip_cap), float(epsilon))
    return np.asarray(out).reshape(x.shape)


def use_backend(name):
    """Switch backend at runtime ("cython" or "python"); used by tests and benchmarks."""
    global _impl, BACKEND
    if name == "python":
        _impl, BACKEND = _fallback, "python"
    elif name == "cython":
        from . import _kernels

        _impl, BACKEND = _kernels, "cython"
    else:
        raise ValueError(f"unknown backend {name!r}")
