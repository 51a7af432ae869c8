"""Dense/sparse matrix kernels with a fixed reduction order, plus FPT1 I/O.

Dense matrices are plain 2-D float64 numpy arrays. ``gemm`` sums each output
element sequentially over the inner dimension, so results are reproducible
bit for bit regardless of BLAS build or thread count.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import kernels
from .formats import FormatError


def _as_matrix(x, name="matrix"):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {x.shape}")
    return x


def gemm(a, b) -> np.ndarray:
    a, b = _as_matrix(a, "a"), _as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"gemm shape mismatch: {a.shape} @ {b.shape}")
    return kernels.gemm(a, b)


def bmm(a, b) -> np.ndarray:
    """Batched gemm over the leading axis, same reduction order as ``gemm``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 3 or b.ndim != 3 or a.shape[0] != b.shape[0] or a.shape[2] != b.shape[1]:
        raise ValueError(f"bmm shape mismatch: {a.shape} @ {b.shape}")
    return kernels.bmm(a, b)


def elementwise(op, *tensors) -> np.ndarray:
    """Apply a unary or binary real map pointwise; binary operands must match in shape."""
    arrs = [np.asarray(t, dtype=np.float64) for t in tensors]
    if len(arrs) == 2 and arrs[0].shape != arrs[1].shape:
        raise ValueError(f"shape mismatch: {arrs[0].shape} vs {arrs[1].shape}")
    return np.asarray(op(*arrs), dtype=np.float64)


def hadamard(x, y) -> np.ndarray:
    return elementwise(np.multiply, x, y)


@dataclass(frozen=True, eq=False)
class SparseResidual:
    """COO matrix; entries sorted by (row, col), no duplicates, no zeros."""

    rows: int
    cols: int
    row_idx: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        n = len(self.values)
        if len(self.row_idx) != n or len(self.col_idx) != n:
            raise ValueError("index/value length mismatch")
        if n:
            if (self.row_idx.min() < 0 or self.row_idx.max() >= self.rows
                    or self.col_idx.min() < 0 or self.col_idx.max() >= self.cols):
                raise ValueError("sparse index out of range")
            lin = self.row_idx.astype(np.int64) * self.cols + self.col_idx
            if np.any(np.diff(lin) <= 0):
                raise ValueError("entries must be strictly sorted by (row, col)")
            if np.any(self.values == 0):
                raise ValueError("explicit zeros are not allowed")

    @classmethod
    def from_dense(cls, d) -> "SparseResidual":
        d = _as_matrix(d)
        r, c = np.nonzero(d)  # row-major order
        return cls(d.shape[0], d.shape[1], r.astype(np.intp), c.astype(np.intp), d[r, c].copy())

    @classmethod
    def empty(cls, rows, cols) -> "SparseResidual":
        z = np.zeros(0, dtype=np.intp)
        return cls(rows, cols, z, z.copy(), np.zeros(0))

    @property
    def nnz(self) -> int:
        return len(self.values)

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def sparsity(self) -> float:
        """Fraction of nonzero entries."""
        total = self.rows * self.cols
        return self.nnz / total if total else 0.0

    def densify(self) -> np.ndarray:
        out = np.zeros((self.rows, self.cols))
        out[self.row_idx, self.col_idx] = self.values
        return out

    def transpose(self) -> "SparseResidual":
        order = np.lexsort((self.row_idx, self.col_idx))
        return SparseResidual(self.cols, self.rows, self.col_idx[order],
                              self.row_idx[order], self.values[order])


def sparse_dense_gemm(s: SparseResidual, b) -> np.ndarray:
    """S @ B with each output row accumulated in increasing column-of-S order.

    Matches ``gemm(s.densify(), b)`` exactly: the dense kernel adds explicit
    zero products, and x + 0*y == x for finite y.
    """
    b = _as_matrix(b, "b")
    if s.cols != b.shape[0]:
        raise ValueError(f"sparse_dense_gemm shape mismatch: {s.shape} @ {b.shape}")
    return kernels.coo_gemm(s.row_idx, s.col_idx, s.values, b, s.rows)


# -- FPT1 tensor files ---------------------------------------------------------

FPT1_MAGIC = b"FPT1"
_MAX_ELEMS = 1 << 31


def encode_fpt1(x) -> bytes:
    x = np.asarray(x)
    head = FPT1_MAGIC + struct.pack("<I", x.ndim) + struct.pack(f"<{x.ndim}I", *x.shape)
    return head + np.ascontiguousarray(x, dtype="<f4").tobytes()


def decode_fpt1(data: bytes) -> np.ndarray:
    if data[:4] != FPT1_MAGIC:
        raise FormatError("bad magic, expected FPT1")
    if len(data) < 8:
        raise FormatError("truncated FPT1 header")
    (ndim,) = struct.unpack_from("<I", data, 4)
    if ndim > 8 or len(data) < 8 + 4 * ndim:
        raise FormatError(f"bad FPT1 ndim {ndim}")
    dims = struct.unpack_from(f"<{ndim}I", data, 8)
    n = 1
    for d in dims:
        n *= d
    if n > _MAX_ELEMS:
        raise FormatError(f"FPT1 dimensions overflow: {dims}")
    off = 8 + 4 * ndim
    if len(data) != off + 4 * n:
        raise FormatError(f"FPT1 payload size {len(data) - off} != expected {4 * n}")
    return np.frombuffer(data, dtype="<f4", offset=off, count=n).astype(np.float64).reshape(dims)


def write_fpt1(path, x) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_fpt1(x))


def read_fpt1(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_fpt1(fh.read())
