"""Software simulation of FP4 quantized training."""

from .kernels import BACKEND
from .formats import (
    E1M2, E2M1, E3M0, Axis, Fp4Format, QuantizedTensor, compute_scales, decode,
    dequantize, quantize_nearest, quantize_tensor,
)
from .dge import DgeConfig, dge_correction_matrix, dge_derivative, dge_weight_backward, surrogate_forward
from .occ import OccConfig, clamp_and_split, compensated_linear, fidelity_metrics, quantile_thresholds

__version__ = "0.1.0"
