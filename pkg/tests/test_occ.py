import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fp4sim.formats import Axis, dequantize, quantize_tensor
from fp4sim.linalg import gemm
from fp4sim.occ import (
    OccConfig, clamp_and_split, compensated_linear, fidelity_metrics, nearest_rank, occ_quantize,
    quantile_thresholds,
)


def test_nearest_rank():
    assert nearest_rank(0.99, 100) == 99
    assert nearest_rank(0.01, 100) == 1  # q*n carries binary error just above 1
    assert nearest_rank(0.0, 10) == 1
    assert nearest_rank(1.0, 10) == 10
    assert nearest_rank(0.5, 3) == 2


def test_quantile_thresholds_on_arange():
    y = np.arange(1.0, 101.0)
    assert quantile_thresholds(y, 0.99) == (1.0, 99.0)
    assert quantile_thresholds(y, 0.9) == (10.0, 90.0)
    assert quantile_thresholds(-y, 0.99) == (-100.0, -2.0)
    assert quantile_thresholds(y, 1.0) == (1.0, 100.0)


def test_single_outlier_example():
    y = np.linspace(0.0, 1.0, 100)
    y[37] = 100.0
    split = clamp_and_split(y[None, :], OccConfig(alpha=0.97))
    r = split.residual
    assert r.nnz >= 1
    assert 37 in r.col_idx
    k = list(r.col_idx).index(37)
    assert r.values[k] == pytest.approx(100.0 - split.upper, abs=1e-12)
    assert np.all(split.clamped <= split.upper) and np.all(split.clamped >= split.lower)


def test_alpha_one_clamps_nothing():
    y = np.random.default_rng(0).standard_normal((8, 8))
    split = clamp_and_split(y, OccConfig(alpha=1.0))
    assert split.residual.nnz == 0
    np.testing.assert_array_equal(split.clamped, y)


def test_config_validation():
    for bad in (0.5, 0.2, 1.01):
        with pytest.raises(ValueError):
            OccConfig(alpha=bad)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.9, 0.97, 0.99, 0.999]),
       st.floats(1e-6, 1e6))
def test_reconstruction_is_bitwise(seed, alpha, scale):
    rng = np.random.default_rng(seed)
    y = rng.standard_t(2, (17, 23)) * scale
    split = clamp_and_split(y, OccConfig(alpha))
    assert np.array_equal(split.clamped + split.residual.densify(), y)


def test_reconstruction_mixed_sign_bounds():
    # both bounds on the same side of zero: clamped values cross sign with residuals
    y = np.concatenate([np.full(50, 3.3), np.linspace(1.1, 2.9, 49), [-7.7]])[None, :]
    split = clamp_and_split(y, OccConfig(0.97))
    assert np.array_equal(split.clamped + split.residual.densify(), y)


@pytest.mark.parametrize("alpha", [0.97, 0.99, 0.999])
def test_residual_fraction(alpha):
    y = np.random.default_rng(11).standard_normal((100, 100))
    frac = clamp_and_split(y, OccConfig(alpha)).residual.sparsity
    assert abs(frac - 2 * (1 - alpha)) <= 0.015


def test_compensated_linear_identity_cases():
    rng = np.random.default_rng(3)
    # representable activations/weights, no clamping: the FP4 GEMM is exact
    a = rng.choice([-6.0, -1.0, 0.5, 3.0, 6.0], (5, 8))
    w = rng.choice([-6.0, -2.0, 1.5, 4.0, 6.0], (8, 4))
    a[:, 0] = 6.0
    w[0, :] = 6.0
    np.testing.assert_array_equal(compensated_linear(a, w, OccConfig(alpha=1.0)), gemm(a, w))


def test_alpha_one_equals_plain_fp4_gemm():
    rng = np.random.default_rng(4)
    a, w = rng.standard_normal((6, 9)), rng.standard_normal((9, 5))
    plain = gemm(dequantize(quantize_tensor(a, Axis.PER_ROW)), dequantize(quantize_tensor(w, Axis.PER_COLUMN)))
    np.testing.assert_array_equal(compensated_linear(a, w, OccConfig(alpha=1.0)), plain)


def test_compensation_helps_on_outliers():
    wins = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((32, 64))
        a[rng.integers(0, 32, 6), rng.integers(0, 64, 6)] = 50.0 * rng.choice([-1, 1], 6)
        w = rng.standard_normal((64, 16))
        ref = a @ w
        on = np.linalg.norm(compensated_linear(a, w, OccConfig(0.99, True)) - ref)
        off = np.linalg.norm(compensated_linear(a, w, OccConfig(0.99, False)) - ref)
        wins += on <= off
    assert wins == 20


def test_occ_quantize_compensation_is_exact_on_residual_positions():
    y = np.random.default_rng(5).standard_t(2, (16, 16))
    split = clamp_and_split(y, OccConfig(0.97))
    out = occ_quantize(y, OccConfig(0.97))
    base = occ_quantize(y, OccConfig(0.97, enable_compensation=False))
    r, c = split.residual.row_idx, split.residual.col_idx
    np.testing.assert_array_equal(out[r, c], base[r, c] + split.residual.values)


def test_fidelity_metrics_examples():
    x = np.array([1.0, 2.0, 3.0])
    f = fidelity_metrics(x, x)
    assert f["cos_sim"] == pytest.approx(1.0) and f["mse"] == 0.0 and f["snr_db"] == math.inf
    f = fidelity_metrics(x, np.array([1.0, 2.0, 2.0]))
    assert f["mse"] == pytest.approx(1 / 3)
    assert f["snr_db"] == pytest.approx(10 * math.log10(14.0))
    with pytest.raises(ValueError):
        fidelity_metrics(np.zeros(3), x)
    with pytest.raises(ValueError):
        fidelity_metrics(x, np.ones(4))


def test_clamp_only_beats_direct_on_heavy_tail():
    y = np.random.default_rng(7).standard_t(3, (256, 512))
    direct = fidelity_metrics(y, occ_quantize(y, None, axis=Axis.PER_TENSOR))["snr_db"]
    clamp = fidelity_metrics(y, occ_quantize(y, OccConfig(0.999, False), axis=Axis.PER_TENSOR))["snr_db"]
    assert clamp > direct


def test_bounds_bracket_zero_for_one_sided_tensors():
    # almost everything negative: the raw upper quantile is negative, but values
    # between it and zero are never pushed away from zero
    y = np.concatenate([-np.linspace(1e-5, 3e-5, 200), [-1.2295730642278215e-06, 0.3]])[None, :]
    split = clamp_and_split(y, OccConfig(0.99))
    assert split.lower <= 0.0 <= split.upper
    assert np.array_equal(split.clamped + split.residual.densify(), y)
    assert np.all(np.sign(split.residual.values) == np.sign(y[0, split.residual.col_idx]))
