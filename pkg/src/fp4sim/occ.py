"""Outlier Clamping and Compensation for activation tensors."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .formats import E2M1, Axis, Fp4Format, dequantize, quantize_tensor
from .linalg import SparseResidual, gemm, sparse_dense_gemm


@dataclass(frozen=True)
class OccConfig:
    alpha: float = 0.99
    enable_compensation: bool = True

    def __post_init__(self):
        if not 0.5 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0.5, 1], got {self.alpha}")


@dataclass(frozen=True, eq=False)
class ClampSplit:
    clamped: np.ndarray
    residual: SparseResidual
    lower: float
    upper: float


def nearest_rank(q: float, n: int) -> int:
    """1-based rank ceil(q * n), clamped to [1, n]."""
    # tolerance absorbs binary error in q*n, e.g. (1 - 0.99) * 100 = 1.0000000000000009
    return min(max(math.ceil(q * n - 1e-9), 1), n)


def quantile_thresholds(y, alpha: float) -> tuple[float, float]:
    """Signed nearest-rank quantiles: (1 - alpha) for the lower bound, alpha for the upper."""
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.size == 0:
        raise ValueError("quantile of an empty tensor")
    lo, hi = nearest_rank(1.0 - alpha, y.size) - 1, nearest_rank(alpha, y.size) - 1
    part = np.partition(y, (lo, hi))  # order statistics only; no full sort
    return float(part[lo]), float(part[hi])


def snap_bounds(lower: float, upper: float, absmax: float) -> tuple[float, float]:
    """Round clamp bounds outward onto the grid of ulp(absmax).

    Every |y| <= absmax is a multiple of its own ulp, which divides the grid
    step, so y - bound is exactly representable whenever y and the bound share
    a sign. The shift is below one ulp of the largest element.
    """
    q = float(np.spacing(absmax)) if absmax > 0 else 0.0
    if q == 0.0 or not np.isfinite(q):
        return lower, upper
    return math.floor(lower / q) * q, math.ceil(upper / q) * q


def clamp_and_split(y, cfg: OccConfig = OccConfig()) -> ClampSplit:
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    lower, upper = quantile_thresholds(y, cfg.alpha)
    # Bounds never cross zero. A bound on the far side of zero would push small
    # values outward, and y - bound is then not exactly representable when |y|
    # is tiny next to |bound|. With 0 in [lower, upper] every residual has the
    # sign of its y and a smaller magnitude, which the snapping below makes exact.
    lower, upper = min(lower, 0.0), max(upper, 0.0)
    lower, upper = snap_bounds(lower, upper, float(np.abs(y).max()))
    clamped = np.minimum(upper, np.maximum(lower, y))
    r, c = np.nonzero((y > upper) | (y < lower))
    vals = y[r, c] - clamped[r, c]
    if np.any(clamped[r, c] + vals != y[r, c]):  # cannot happen with snapped, zero-bracketing bounds
        raise ArithmeticError("clamp residual is not exactly representable")
    residual = SparseResidual(y.shape[0], y.shape[1], r.astype(np.intp), c.astype(np.intp), vals)
    return ClampSplit(clamped, residual, lower, upper)


def _granularity_axes(granularity: str) -> tuple[Axis, Axis]:
    g = granularity.lower()
    if g in ("vector", "vectorwise", "vector-wise"):
        return Axis.PER_ROW, Axis.PER_COLUMN
    if g in ("tensor", "tensorwise", "tensor-wise"):
        return Axis.PER_TENSOR, Axis.PER_TENSOR
    raise ValueError(f"unknown granularity {granularity!r}")


def compensated_linear(a, w, occ: OccConfig = OccConfig(), fmt: Fp4Format = E2M1,
                       granularity: str = "vector") -> np.ndarray:
    """FP4 GEMM on the clamped activations plus a full-precision sparse outlier term."""
    a = np.asarray(a, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if a.shape[1] != w.shape[0]:
        raise ValueError(f"shape mismatch: {a.shape} @ {w.shape}")
    a_axis, w_axis = _granularity_axes(granularity)
    split = clamp_and_split(a, occ)
    a_q = dequantize(quantize_tensor(split.clamped, a_axis, fmt))
    w_q = dequantize(quantize_tensor(w, w_axis, fmt))
    y = gemm(a_q, w_q)
    if occ.enable_compensation and split.residual.nnz:
        y = y + sparse_dense_gemm(split.residual, w)
    return y


def occ_quantize(y, occ: OccConfig | None = OccConfig(), fmt: Fp4Format = E2M1,
                 axis: Axis = Axis.PER_ROW) -> np.ndarray:
    """FP4 approximation of an activation tensor: clamp, quantize, add back the residual.

    ``occ=None`` quantizes directly with no clamping.
    """
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if occ is None:
        return dequantize(quantize_tensor(y, axis, fmt))
    split = clamp_and_split(y, occ)
    out = dequantize(quantize_tensor(split.clamped, axis, fmt))
    if occ.enable_compensation and split.residual.nnz:
        out[split.residual.row_idx, split.residual.col_idx] += split.residual.values
    return out


def fidelity_metrics(original, approx) -> dict:
    """Cosine similarity, MSE and SNR (dB, signal power over error power)."""
    x = np.asarray(original, dtype=np.float64).ravel()
    xh = np.asarray(approx, dtype=np.float64).ravel()
    if x.shape != xh.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {xh.shape}")
    sig = float(np.dot(x, x))
    if sig == 0.0:
        raise ValueError("cos_sim/snr undefined for an all-zero original")
    err = x - xh
    noise = float(np.dot(err, err))
    nh = float(np.linalg.norm(xh))
    cos = float(np.dot(x, xh)) / (math.sqrt(sig) * nh) if nh > 0 else 0.0
    snr = math.inf if noise == 0.0 else 10.0 * math.log10(sig / noise)
    return {"cos_sim": cos, "mse": noise / x.size, "snr_db": snr}
