"""Differentiable Gradient Estimator.

The forward pass keeps hard LUT quantization. The backward pass multiplies
the weight gradient by the derivative of a power-law soft step that tiles
every quantization interval of the format:

    f(t) = d/2 * (1 + sign(2t/d - 1) * |2t/d - 1|**(1/k)),   t in [0, d]
    f'(t) = 1/k * |2t/d - 1|**(1/k - 1)

f' diverges at the interval midpoint, so it is either capped (``clip_cap``)
or computed with |u| replaced by sqrt(u**2 + eps**2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .formats import E2M1, Fp4Format


@dataclass(frozen=True)
class DgeConfig:
    k: float = 5.0
    clip_cap: float = 3.0
    epsilon: float = 0.0  # 0 selects the clipped variant

    def __post_init__(self):
        # k == 1 is admitted: it is the STE reduction (f' == 1)
        if not self.k >= 1:
            raise ValueError(f"DGE k must be >= 1, got {self.k}")
        if not self.clip_cap > 0:
            raise ValueError(f"clip_cap must be positive, got {self.clip_cap}")
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be non-negative, got {self.epsilon}")


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    @property
    def delta(self) -> float:
        return self.hi - self.lo


def interval_map(fmt: Fp4Format = E2M1) -> list[Interval]:
    """Contiguous intervals between adjacent representable values."""
    v = fmt.values
    return [Interval(float(a), float(b)) for a, b in zip(v[:-1], v[1:])]


def locate(x: float, fmt: Fp4Format = E2M1) -> Interval:
    """Interval containing x; a representable point belongs to the interval on its right,
    except +max_abs which takes its left interval."""
    v = fmt.values
    if not v[0] <= x <= v[-1]:
        raise ValueError(f"{x} outside [{v[0]}, {v[-1]}]")
    i = int(np.searchsorted(v, x, side="right")) - 1
    i = min(max(i, 0), len(v) - 2)
    return Interval(float(v[i]), float(v[i + 1]))


def _local(t: float, delta: float) -> float:
    if not 0.0 <= t <= delta:
        raise ValueError(f"local coordinate {t} outside [0, {delta}]")
    return 2.0 * t / delta - 1.0


def surrogate_forward(x: float, lo: float, delta: float, k: float) -> float:
    u = _local(x - lo, delta)
    return lo + 0.5 * delta * (1.0 + np.sign(u) * abs(u) ** (1.0 / k))


def dge_derivative(x: float, lo: float, delta: float, cfg: DgeConfig = DgeConfig()) -> float:
    u = _local(x - lo, delta)
    e = 1.0 / cfg.k - 1.0
    if cfg.epsilon > 0:
        return (1.0 / cfg.k) * np.sqrt(u * u + cfg.epsilon ** 2) ** e
    if e == 0.0:
        return 1.0 / cfg.k
    if u == 0.0:
        return cfg.clip_cap
    return min(cfg.clip_cap, (1.0 / cfg.k) * abs(u) ** e)


def surrogate_quantize(x, fmt: Fp4Format = E2M1, k: float = 5.0) -> np.ndarray:
    """Vectorized soft quantizer over the full format range (for gradient checks)."""
    x = np.asarray(x, dtype=np.float64)
    v = fmt.values
    if np.any(x < v[0]) or np.any(x > v[-1]):
        raise ValueError("entries outside the format range")
    i = np.clip(np.searchsorted(v, x, side="right") - 1, 0, len(v) - 2)
    lo, delta = v[i], v[i + 1] - v[i]
    u = 2.0 * (x - lo) / delta - 1.0
    return lo + 0.5 * delta * (1.0 + np.sign(u) * np.abs(u) ** (1.0 / k))


def dge_correction_matrix(w_scaled, fmt: Fp4Format = E2M1, cfg: DgeConfig = DgeConfig()) -> np.ndarray:
    w_scaled = np.asarray(w_scaled, dtype=np.float64)
    m = fmt.max_abs
    if np.any(np.abs(w_scaled) > m) or np.isnan(w_scaled).any():
        raise ValueError(f"scaled weights must lie in [-{m}, {m}]")
    return kernels.dge_correction(w_scaled, fmt.values, cfg.k, cfg.clip_cap, cfg.epsilon)


def dge_weight_backward(grad_wq, w_scaled, fmt: Fp4Format = E2M1,
                        cfg: DgeConfig = DgeConfig()) -> np.ndarray:
    """dL/dW = dL/dW_q * f'(W_scaled); per-channel scales cancel and never appear."""
    grad_wq = np.asarray(grad_wq, dtype=np.float64)
    if grad_wq.shape != np.shape(w_scaled):
        raise ValueError(f"shape mismatch: {grad_wq.shape} vs {np.shape(w_scaled)}")
    return grad_wq * dge_correction_matrix(w_scaled, fmt, cfg)
