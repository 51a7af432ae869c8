# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops. Semantics must match ``fp4sim._fallback`` bit for bit."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, pow, sqrt, INFINITY

cnp.import_array()


def gemm(const double[:, ::1] a, const double[:, ::1] b):
    cdef Py_ssize_t m = a.shape[0], kk = a.shape[1], n = b.shape[1]
    if b.shape[0] != kk:
        raise ValueError(f"gemm shape mismatch: ({m}, {kk}) @ ({b.shape[0]}, {n})")
    out = np.zeros((m, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    if m and n and kk:
        with nogil:
            _gemm_rows(&a[0, 0], &b[0, 0], &o[0, 0], m, kk, n)
    return out


cdef extern from "_gemm.h" nogil:
    void _gemm_rows "fp4sim_gemm"(const double* a, const double* b, double* o,
                                  Py_ssize_t m, Py_ssize_t kk, Py_ssize_t n)


def bmm(const double[:, :, ::1] a, const double[:, :, ::1] b):
    cdef Py_ssize_t nb = a.shape[0], m = a.shape[1], kk = a.shape[2], n = b.shape[2]
    cdef Py_ssize_t p
    if b.shape[0] != nb or b.shape[1] != kk:
        raise ValueError("bmm shape mismatch")
    out = np.zeros((nb, m, n), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    if nb and m and n and kk:
        with nogil:
            for p in range(nb):
                _gemm_rows(&a[p, 0, 0], &b[p, 0, 0], &o[p, 0, 0], m, kk, n)
    return out


def coo_gemm(const Py_ssize_t[::1] rows, const Py_ssize_t[::1] cols,
             const double[::1] vals, const double[:, ::1] b, Py_ssize_t nrows):
    """Sparse (COO, sorted by row then col) times dense."""
    cdef Py_ssize_t nnz = vals.shape[0], n = b.shape[1], e, j, r, c
    cdef double v
    out = np.zeros((nrows, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for e in range(nnz):
            r = rows[e]
            c = cols[e]
            v = vals[e]
            for j in range(n):
                o[r, j] = o[r, j] + v * b[c, j]
    return out


def lut_index(const double[::1] x, const double[::1] thresholds):
    """Bucket index per element: first i with x < thresholds[i], else len(thresholds).

    With sorted thresholds that index is the count of thresholds <= x, which
    is computed branch-free.
    """
    cdef Py_ssize_t n = x.shape[0], nt = thresholds.shape[0]
    cdef Py_ssize_t i, t, cnt
    cdef double v
    out = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t[::1] o = out
    with nogil:
        for i in range(n):
            v = x[i]
            cnt = 0
            for t in range(nt):
                cnt += thresholds[t] <= v
            o[i] = cnt
    return out


def dge_correction(const double[::1] x, const double[::1] grid, double k,
                   double clip_cap, double epsilon):
    """Elementwise DGE derivative over a sorted grid of representable values."""
    cdef Py_ssize_t n = x.shape[0], ng = grid.shape[0]
    cdef Py_ssize_t i, j, lo
    cdef double v, delta, u, e = 1.0 / k - 1.0, inv_k = 1.0 / k, d
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            v = x[i]
            # branch-free interval search: count interior grid points <= v
            lo = 0
            for j in range(1, ng - 1):
                lo += grid[j] <= v
            delta = grid[lo + 1] - grid[lo]
            u = 2.0 * (v - grid[lo]) / delta - 1.0
            if epsilon > 0.0:
                o[i] = inv_k * pow(sqrt(u * u + epsilon * epsilon), e)
            else:
                u = fabs(u)
                if e == 0.0:
                    d = inv_k
                elif u == 0.0:
                    d = INFINITY
                else:
                    d = inv_k * pow(u, e)
                o[i] = d if d < clip_cap else clip_cap
    return out
