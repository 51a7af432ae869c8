"""FP4-quantized linear layer: hard LUT quantization forward, DGE/STE backward."""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

import numpy as np

from ..dge import DgeConfig, dge_weight_backward, surrogate_quantize
from ..formats import (
    E2M1, FP8_E4M3_MAX, Axis, Fp4Format, NonFiniteError, broadcast_scales,
    compute_scales, quantize_fp8_e4m3, quantize_values,
)
from ..linalg import SparseResidual, gemm, sparse_dense_gemm
from ..occ import OccConfig, clamp_and_split

WEIGHT_MODES = ("full", "fp4", "fp4_dge", "fp8")
ACT_MODES = ("full", "fp4", "fp4_occ", "fp8")
GRANULARITIES = ("vector", "tensor")


@dataclass(frozen=True)
class QuantLinearConfig:
    weight_mode: str = "full"
    act_mode: str = "full"
    weight_granularity: str = "vector"
    act_granularity: str = "vector"
    format: Fp4Format = E2M1
    dge: DgeConfig = field(default_factory=DgeConfig)
    occ: OccConfig = field(default_factory=OccConfig)
    # "surrogate" replaces the hard weight quantizer by its smooth approximation;
    # only meant for finite-difference checks of the DGE backward
    weight_forward: str = "hard"

    def __post_init__(self):
        if self.weight_mode not in WEIGHT_MODES:
            raise ValueError(f"weight_mode must be one of {WEIGHT_MODES}")
        if self.act_mode not in ACT_MODES:
            raise ValueError(f"act_mode must be one of {ACT_MODES}")
        for g in (self.weight_granularity, self.act_granularity):
            if g not in GRANULARITIES:
                raise ValueError(f"granularity must be one of {GRANULARITIES}")
        if self.weight_forward not in ("hard", "surrogate"):
            raise ValueError("weight_forward must be 'hard' or 'surrogate'")

    @property
    def weight_axis(self) -> Axis:
        # channel-wise for weights: one scale per output column
        return Axis.PER_COLUMN if self.weight_granularity == "vector" else Axis.PER_TENSOR

    @property
    def act_axis(self) -> Axis:
        # token-wise for activations: one scale per row
        return Axis.PER_ROW if self.act_granularity == "vector" else Axis.PER_TENSOR

    def with_granularity(self, granularity: str) -> "QuantLinearConfig":
        return replace(self, weight_granularity=granularity, act_granularity=granularity)

    @classmethod
    def from_mode(cls, mode: str, **kw) -> "QuantLinearConfig":
        """Parse names like "full", "w4a4", "w4a8-dge", "w8a4-occ", "w4a4-dge-occ"."""
        m = re.fullmatch(r"(?:w(4|8|16)a(4|8|16))((?:-(?:dge|occ))*)|(full|bf16|fp32)", mode.strip().lower())
        if m is None:
            raise ValueError(f"unrecognised precision mode {mode!r}")
        if m.group(4):
            return cls(weight_mode="full", act_mode="full", **kw)
        wb, ab, extras = m.group(1), m.group(2), set(filter(None, m.group(3).split("-")))
        weight_mode = {"4": "fp4", "8": "fp8", "16": "full"}[wb]
        act_mode = {"4": "fp4", "8": "fp8", "16": "full"}[ab]
        if "dge" in extras:
            if weight_mode != "fp4":
                raise ValueError("dge needs 4-bit weights")
            weight_mode = "fp4_dge"
        if "occ" in extras:
            if act_mode != "fp4":
                raise ValueError("occ needs 4-bit activations")
            act_mode = "fp4_occ"
        return cls(weight_mode=weight_mode, act_mode=act_mode, **kw)


@dataclass
class LinearContext:
    a_used: np.ndarray
    w_used: np.ndarray
    w: np.ndarray
    w_scaled: np.ndarray | None = None
    w_scales: np.ndarray | None = None
    residual: SparseResidual | None = None


def _fake_quant_fp4(x, axis, fmt, surrogate_k=None):
    scales = compute_scales(x, axis, fmt)
    s = broadcast_scales(scales, axis, x.shape)
    scaled = np.clip(x * s, -fmt.max_abs, fmt.max_abs)
    if surrogate_k is None:
        q = quantize_values(scaled, fmt)
    else:
        q = surrogate_quantize(scaled, fmt, surrogate_k)
    return q / s, scaled, scales


def _fake_quant_fp8(x, axis):
    scales = compute_scales(x, axis, FP8_E4M3_MAX)
    s = broadcast_scales(scales, axis, x.shape)
    return quantize_fp8_e4m3(x * s) / s


def quant_linear_forward(a, w, cfg: QuantLinearConfig):
    """y = Q(a) @ Q(w) (+ residual @ w under OCC); returns (y, context)."""
    a = np.asarray(a, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if a.ndim != 2 or w.ndim != 2 or a.shape[1] != w.shape[0]:
        raise ValueError(f"shape mismatch: {a.shape} @ {w.shape}")
    if not (np.isfinite(a).all() and np.isfinite(w).all()):
        raise NonFiniteError("non-finite input to quantized linear layer")
    ctx = LinearContext(a_used=a, w_used=w, w=w)

    if cfg.weight_mode in ("fp4", "fp4_dge"):
        k = cfg.dge.k if cfg.weight_forward == "surrogate" else None
        ctx.w_used, ctx.w_scaled, ctx.w_scales = _fake_quant_fp4(w, cfg.weight_axis, cfg.format, k)
    elif cfg.weight_mode == "fp8":
        ctx.w_used = _fake_quant_fp8(w, cfg.weight_axis)

    if cfg.act_mode == "fp4":
        ctx.a_used = _fake_quant_fp4(a, cfg.act_axis, cfg.format)[0]
    elif cfg.act_mode == "fp4_occ":
        split = clamp_and_split(a, cfg.occ)
        ctx.a_used = _fake_quant_fp4(split.clamped, cfg.act_axis, cfg.format)[0]
        if cfg.occ.enable_compensation and split.residual.nnz:
            ctx.residual = split.residual
    elif cfg.act_mode == "fp8":
        ctx.a_used = _fake_quant_fp8(a, cfg.act_axis)

    y = gemm(ctx.a_used, ctx.w_used)
    if ctx.residual is not None:
        y += sparse_dense_gemm(ctx.residual, w)
    return y, ctx


def quant_linear_backward(grad_y, ctx: LinearContext, cfg: QuantLinearConfig):
    """Returns (grad_a, grad_w).

    Activation quantization and OCC are passed straight through. The FP4 GEMM
    term's weight gradient gets the DGE correction in fp4_dge mode; the sparse
    compensation term multiplies the unquantized weights, so its share of the
    weight gradient is added uncorrected.
    """
    if ctx is None:
        raise ValueError("missing forward context")
    grad_y = np.asarray(grad_y, dtype=np.float64)
    grad_a = gemm(grad_y, ctx.w_used.T)
    grad_w = gemm(ctx.a_used.T, grad_y)
    if cfg.weight_mode == "fp4_dge":
        grad_w = dge_weight_backward(grad_w, ctx.w_scaled, cfg.format, cfg.dge)
    if ctx.residual is not None:
        grad_w += sparse_dense_gemm(ctx.residual.transpose(), grad_y)
    return grad_a, grad_w

