"""Compiled and fallback kernels must agree (bitwise where the contract says so)."""

import numpy as np
import pytest

from fp4sim import _fallback, kernels
from fp4sim.formats import E1M2, E2M1, E3M0

try:
    from fp4sim import _kernels
except ImportError:  # pragma: no cover
    _kernels = None

needs_ext = pytest.mark.skipif(_kernels is None, reason="compiled extension not built")


def seq_gemm(a, b):
    """Textbook triple loop in k order."""
    m, n = a.shape[0], b.shape[1]
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for k in range(a.shape[1]):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc
    return out


def test_fallback_gemm_is_sequential():
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal((5, 13)), rng.standard_normal((13, 4))
    np.testing.assert_array_equal(_fallback.gemm(a, b), seq_gemm(a, b))


@needs_ext
@pytest.mark.parametrize("shape", [(1, 1, 1), (3, 7, 5), (17, 33, 9), (64, 64, 192)])
def test_gemm_bitwise_parity(shape):
    m, k, n = shape
    rng = np.random.default_rng(m * k * n)
    a, b = rng.standard_normal((m, k)), rng.standard_normal((k, n))
    np.testing.assert_array_equal(_kernels.gemm(a, b), _fallback.gemm(a, b))


@needs_ext
def test_bmm_bitwise_parity():
    rng = np.random.default_rng(1)
    a, b = rng.standard_normal((4, 9, 11)), rng.standard_normal((4, 11, 6))
    np.testing.assert_array_equal(_kernels.bmm(a, b), _fallback.bmm(a, b))


def _random_coo(rng, rows, cols, density):
    mask = rng.random((rows, cols)) < density
    r, c = np.nonzero(mask)
    return r.astype(np.intp), c.astype(np.intp), rng.standard_normal(r.size)


@pytest.mark.parametrize("impl", ["python", "cython"])
def test_coo_gemm_matches_dense(impl):
    mod = _fallback if impl == "python" else _kernels
    if mod is None:
        pytest.skip("compiled extension not built")
    rng = np.random.default_rng(2)
    r, c, v = _random_coo(rng, 12, 20, 0.1)
    b = rng.standard_normal((20, 7))
    dense = np.zeros((12, 20))
    dense[r, c] = v
    np.testing.assert_array_equal(mod.coo_gemm(r, c, v, b, 12), _fallback.gemm(dense, b))


@needs_ext
@pytest.mark.parametrize("fmt", [E1M2, E2M1, E3M0])
def test_lut_index_parity(fmt):
    rng = np.random.default_rng(3)
    x = np.concatenate([rng.uniform(-20, 20, 1000), fmt.thresholds, fmt.values])
    np.testing.assert_array_equal(_kernels.lut_index(x, fmt.thresholds),
                                  _fallback.lut_index(x, fmt.thresholds))


@needs_ext
@pytest.mark.parametrize("eps", [0.0, 0.05])
@pytest.mark.parametrize("k", [1.0, 3.0, 5.0])
def test_dge_correction_parity(k, eps):
    rng = np.random.default_rng(4)
    x = np.concatenate([rng.uniform(-6, 6, 2000), E2M1.values, (E2M1.values[:-1] + E2M1.values[1:]) / 2])
    got = np.asarray(_kernels.dge_correction(x, E2M1.values, k, 3.0, eps))
    want = np.asarray(_fallback.dge_correction(x, E2M1.values, k, 3.0, eps))
    np.testing.assert_allclose(got, want, rtol=1e-14, atol=0)


def test_use_backend_round_trip():
    before = kernels.BACKEND
    kernels.use_backend("python")
    assert kernels.BACKEND == "python"
    if _kernels is not None:
        kernels.use_backend("cython")
        assert kernels.BACKEND == "cython"
    kernels.use_backend(before)
    with pytest.raises(ValueError):
        kernels.use_backend("fortran")
