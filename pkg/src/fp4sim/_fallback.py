"""Pure numpy versions of the compiled kernels.

Each function reproduces the reduction order of its counterpart in
``_kernels.pyx`` so the two backends agree bitwise on gemm and LUT lookups.
"""

import numpy as np


def gemm(a, b):
    m, kk = a.shape
    if b.shape[0] != kk:
        raise ValueError(f"gemm shape mismatch: ({m}, {kk}) @ ({b.shape[0]}, {b.shape[1]})")
    out = np.zeros((m, b.shape[1]), dtype=np.float64)
    for k in range(kk):
        out += a[:, k, None] * b[None, k, :]
    return out


def bmm(a, b):
    if b.shape[0] != a.shape[0] or b.shape[1] != a.shape[2]:
        raise ValueError("bmm shape mismatch")
    out = np.zeros((a.shape[0], a.shape[1], b.shape[2]), dtype=np.float64)
    for k in range(a.shape[2]):
        out += a[:, :, k, None] * b[:, None, k, :]
    return out


def coo_gemm(rows, cols, vals, b, nrows):
    out = np.zeros((nrows, b.shape[1]), dtype=np.float64)
    if not len(vals):
        return out
    # rank of each entry within its row; pass j adds every row's j-th entry,
    # which keeps each output row's accumulation in column order
    starts = np.searchsorted(rows, rows, side="left")
    rank = np.arange(len(vals)) - starts
    for j in range(int(rank.max()) + 1):
        sel = rank == j
        out[rows[sel]] += vals[sel, None] * b[cols[sel]]
    return out


def lut_index(x, thresholds):
    # count of thresholds <= x equals the first index where the strict `<` chain fires
    return np.searchsorted(thresholds, x, side="right").astype(np.intp)


def dge_correction(x, grid, k, clip_cap, epsilon):
    lo = np.clip(np.searchsorted(grid, x, side="right") - 1, 0, len(grid) - 2)
    left = grid[lo]
    delta = grid[lo + 1] - left
    u = 2.0 * (x - left) / delta - 1.0
    e = 1.0 / k - 1.0
    if epsilon > 0.0:
        return (1.0 / k) * np.power(np.sqrt(u * u + epsilon * epsilon), e)
    if e == 0.0:
        return np.full(x.shape, 1.0 / k)
    au = np.abs(u)
    with np.errstate(divide="ignore"):
        d = (1.0 / k) * np.power(au, e)
    return np.minimum(d, clip_cap)
