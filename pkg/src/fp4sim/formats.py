"""FP4 formats, look-up-table quantization and absmax scaling.

Codes follow sign-magnitude layout: bit 3 is the sign, bits 0-2 index the
positive half of the codebook. Both 0b0000 and 0b1000 decode to 0.0.
"""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import kernels


class NonFiniteError(ValueError):
    """Raised when a NaN reaches a quantizer."""


class Axis(enum.IntEnum):
    PER_TENSOR = 0
    PER_ROW = 1
    PER_COLUMN = 2


@dataclass(frozen=True, eq=False)
class Fp4Format:
    name: str
    tag: int
    positive: tuple[float, ...]  # decode values of codes 0b0000..0b0111
    codebook: np.ndarray = field(init=False, repr=False)
    values: np.ndarray = field(init=False, repr=False)
    thresholds: np.ndarray = field(init=False, repr=False)
    index_to_code: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        pos = np.asarray(self.positive, dtype=np.float64)
        codebook = np.concatenate([pos, -pos])
        codebook[8] = 0.0  # 0b1000 is negative zero; collapse it
        values = np.unique(codebook)  # sorted, 15 distinct values
        thresholds = 0.5 * (values[:-1] + values[1:])
        # sorted-value index -> canonical code (positive zero wins)
        index_to_code = np.empty(len(values), dtype=np.uint8)
        for i, v in enumerate(values):
            index_to_code[i] = int(np.flatnonzero(codebook == v)[0])
        for name, arr in (("codebook", codebook), ("values", values),
                          ("thresholds", thresholds), ("index_to_code", index_to_code)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def max_abs(self) -> float:
        return float(self.values[-1])

    def __repr__(self):
        return f"Fp4Format({self.name})"


E1M2 = Fp4Format("E1M2", 0, (0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5))
E2M1 = Fp4Format("E2M1", 1, (0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0))
E3M0 = Fp4Format("E3M0", 2, (0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0))

FORMATS = {f.name: f for f in (E1M2, E2M1, E3M0)}
_BY_TAG = {f.tag: f for f in FORMATS.values()}


def get_format(name) -> Fp4Format:
    if isinstance(name, Fp4Format):
        return name
    try:
        return FORMATS[str(name).upper()]
    except KeyError:
        raise ValueError(f"unknown FP4 format {name!r}; expected one of {sorted(FORMATS)}") from None


def decode(code: int, fmt: Fp4Format = E2M1) -> float:
    if not 0 <= code <= 15:
        raise ValueError(f"FP4 code out of range: {code}")
    return float(fmt.codebook[code])


def quantize_values(x, fmt: Fp4Format = E2M1) -> np.ndarray:
    """Round every element to a representable value with the kernel's strict-< chain."""
    x = np.asarray(x, dtype=np.float64)
    if np.isnan(x).any():
        raise NonFiniteError("NaN input to FP4 quantizer")
    return fmt.values[kernels.lut_index(x, fmt.thresholds)]


def quantize_nearest(x: float, fmt: Fp4Format = E2M1) -> float:
    """Scalar LUT quantization; x exactly on a threshold goes to the upper value."""
    if math.isnan(x):
        raise NonFiniteError("NaN input to FP4 quantizer")
    return float(quantize_values(np.array([x]), fmt)[0])


def _group_absmax(x: np.ndarray, axis: Axis) -> np.ndarray:
    a = np.abs(x)
    if axis == Axis.PER_TENSOR:
        return np.array([a.max()]) if a.size else np.array([0.0])
    if axis == Axis.PER_ROW:
        return a.max(axis=1)
    return a.max(axis=0)


def compute_scales(x, axis: Axis, max_abs: float | Fp4Format = E2M1) -> np.ndarray:
    """Absmax scale factors: gamma = MAX / max|group|; all-zero groups get 1."""
    if isinstance(max_abs, Fp4Format):
        max_abs = max_abs.max_abs
    x = np.asarray(x, dtype=np.float64)
    if np.isnan(x).any():
        raise NonFiniteError("NaN input to FP4 quantizer")
    amax = _group_absmax(x, Axis(axis))
    with np.errstate(divide="ignore"):
        scales = np.where(amax > 0, max_abs / np.where(amax > 0, amax, 1.0), 1.0)
    return scales


def broadcast_scales(scales: np.ndarray, axis: Axis, shape) -> np.ndarray:
    if axis == Axis.PER_TENSOR:
        return np.full(shape, scales[0])
    if axis == Axis.PER_ROW:
        return np.broadcast_to(scales[:, None], shape)
    return np.broadcast_to(scales[None, :], shape)


@dataclass(frozen=True, eq=False)
class QuantizedTensor:
    codes: np.ndarray  # uint8, one code per element, shape (rows, cols)
    scales: np.ndarray
    axis: Axis
    format: Fp4Format

    def __post_init__(self):
        r, c = self.codes.shape
        expected = {Axis.PER_TENSOR: 1, Axis.PER_ROW: r, Axis.PER_COLUMN: c}[self.axis]
        if self.scales.shape != (expected,):
            raise ValueError(f"expected {expected} scales for {self.axis.name}, got {self.scales.shape}")
        if not (np.all(np.isfinite(self.scales)) and np.all(self.scales > 0)):
            raise ValueError("scales must be finite and positive")

    @property
    def shape(self):
        return self.codes.shape


def quantize_tensor(x, axis: Axis = Axis.PER_TENSOR, fmt: Fp4Format = E2M1) -> QuantizedTensor:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    axis = Axis(axis)
    scales = compute_scales(x, axis, fmt)
    scaled = x * broadcast_scales(scales, axis, x.shape)
    idx = kernels.lut_index(scaled, fmt.thresholds)
    return QuantizedTensor(fmt.index_to_code[idx], scales, axis, fmt)


def dequantize(q: QuantizedTensor) -> np.ndarray:
    vals = q.format.codebook[q.codes]
    return vals / broadcast_scales(q.scales, q.axis, vals.shape)


# -- FP8 (E4M3) simulation, used for the W8/A8 ablation arms ------------------

FP8_E4M3_MAX = 448.0


def quantize_fp8_e4m3(x) -> np.ndarray:
    """Round to the nearest E4M3 value (ties to even), saturating at +-448."""
    x = np.asarray(x, dtype=np.float64)
    if np.isnan(x).any():
        raise NonFiniteError("NaN input to FP8 quantizer")
    a = np.minimum(np.abs(x), FP8_E4M3_MAX)
    with np.errstate(divide="ignore"):
        e = np.floor(np.log2(np.where(a > 0, a, 1.0)))
    step = np.exp2(np.maximum(e, -6.0) - 3.0)  # 3 mantissa bits; subnormals below 2^-6
    return np.copysign(np.minimum(np.round(a / step) * step, FP8_E4M3_MAX), x)


# -- packing and the FPQ1 file format ------------------------------------------

def pack_codes(codes: np.ndarray) -> bytes:
    """Two codes per byte, low nibble first, row-major."""
    flat = np.asarray(codes, dtype=np.uint8).ravel()
    if flat.size % 2:
        flat = np.append(flat, np.uint8(0))
    return ((flat[0::2] & 0xF) | ((flat[1::2] & 0xF) << 4)).astype(np.uint8).tobytes()


def unpack_codes(buf: bytes, rows: int, cols: int) -> np.ndarray:
    b = np.frombuffer(buf, dtype=np.uint8)
    out = np.empty(b.size * 2, dtype=np.uint8)
    out[0::2] = b & 0xF
    out[1::2] = b >> 4
    return out[: rows * cols].reshape(rows, cols)


FPQ1_MAGIC = b"FPQ1"


class FormatError(ValueError):
    """Malformed FPT1/FPQ1 payload."""


def encode_fpq1(q: QuantizedTensor) -> bytes:
    r, c = q.shape
    head = FPQ1_MAGIC + struct.pack("<BBII", q.format.tag, int(q.axis), r, c)
    return head + q.scales.astype("<f4").tobytes() + pack_codes(q.codes)


def decode_fpq1(data: bytes) -> QuantizedTensor:
    if data[:4] != FPQ1_MAGIC:
        raise FormatError("bad magic, expected FPQ1")
    if len(data) < 14:
        raise FormatError("truncated FPQ1 header")
    ftag, atag, r, c = struct.unpack_from("<BBII", data, 4)
    if ftag not in _BY_TAG or atag not in (0, 1, 2):
        raise FormatError(f"bad format/axis tag ({ftag}, {atag})")
    axis = Axis(atag)
    n_scales = {Axis.PER_TENSOR: 1, Axis.PER_ROW: r, Axis.PER_COLUMN: c}[axis]
    off = 14
    need = off + 4 * n_scales + (r * c + 1) // 2
    if len(data) != need:
        raise FormatError(f"FPQ1 payload size {len(data)} != expected {need}")
    scales = np.frombuffer(data, dtype="<f4", count=n_scales, offset=off).astype(np.float64)
    codes = unpack_codes(data[off + 4 * n_scales:], r, c)
    return QuantizedTensor(codes, scales, axis, _BY_TAG[ftag])


def write_fpq1(path, q: QuantizedTensor) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_fpq1(q))


def read_fpq1(path) -> QuantizedTensor:
    with open(path, "rb") as fh:
        return decode_fpq1(fh.read())
