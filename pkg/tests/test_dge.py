import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fp4sim.dge import (
    DgeConfig, dge_correction_matrix, dge_derivative, dge_weight_backward, interval_map, locate,
    surrogate_forward, surrogate_quantize,
)
from fp4sim.formats import E1M2, E2M1, E3M0, quantize_values


def test_interval_map_e2m1():
    ivs = interval_map(E2M1)
    assert len(ivs) == 14
    assert sum(iv.delta for iv in ivs) == 12.0
    assert (ivs[0].lo, ivs[-1].hi) == (-6.0, 6.0)
    assert all(a.hi == b.lo for a, b in zip(ivs, ivs[1:]))


def test_locate_boundaries():
    assert locate(2.0) .lo == 2.0 and locate(2.0).hi == 3.0
    assert locate(6.0).lo == 4.0
    assert locate(-6.0).lo == -6.0
    assert locate(0.0).lo == 0.0
    with pytest.raises(ValueError):
        locate(6.5)


def test_surrogate_endpoints_and_midpoint():
    for iv in interval_map(E2M1):
        assert surrogate_forward(iv.lo, iv.lo, iv.delta, 5) == iv.lo
        assert surrogate_forward(iv.hi, iv.lo, iv.delta, 5) == iv.hi
        mid = (iv.lo + iv.hi) / 2
        assert surrogate_forward(mid, iv.lo, iv.delta, 5) == mid


def test_derivative_examples():
    cfg = DgeConfig()
    # E2M1 interval [2, 3], delta 1: u = 2t - 1
    assert dge_derivative(2.0, 2.0, 1.0, cfg) == pytest.approx(0.2)
    assert dge_derivative(2.5, 2.0, 1.0, cfg) == 3.0
    assert dge_derivative(2.25, 2.0, 1.0, cfg) == pytest.approx(0.2 * 0.5 ** -0.8)
    with pytest.raises(ValueError):
        dge_derivative(3.5, 2.0, 1.0, cfg)


def test_config_validation():
    with pytest.raises(ValueError):
        DgeConfig(k=0.5)
    with pytest.raises(ValueError):
        DgeConfig(clip_cap=0)
    with pytest.raises(ValueError):
        DgeConfig(epsilon=-1)


def test_k1_is_ste():
    x = np.linspace(-6, 6, 10_001)
    np.testing.assert_array_equal(dge_correction_matrix(x, E2M1, DgeConfig(k=1)), np.ones_like(x))


@pytest.mark.parametrize("fmt", [E1M2, E2M1, E3M0])
def test_derivative_matches_finite_difference(fmt):
    k = 5.0
    m = fmt.max_abs
    x = np.linspace(-m, m, 4001)
    v = fmt.values
    i = np.clip(np.searchsorted(v, x, side="right") - 1, 0, len(v) - 2)
    lo, d = v[i], v[i + 1] - v[i]
    u = 2 * (x - lo) / d - 1
    keep = (np.abs(u) > 0.1) & (np.abs(u) < 0.999)
    x = x[keep]
    h = 1e-7 * np.ones_like(x)
    fd = (surrogate_quantize(x + h, fmt, k) - surrogate_quantize(x - h, fmt, k)) / (2 * h)
    an = dge_correction_matrix(x, fmt, DgeConfig(k=k, clip_cap=np.inf))
    np.testing.assert_allclose(an, fd, rtol=1e-4)


def test_clip_and_smooth_bounds():
    x = np.linspace(-6, 6, 20_001)
    clipped = dge_correction_matrix(x, E2M1, DgeConfig())
    assert clipped.max() == 3.0 and clipped.min() > 0
    for eps in (0.01, 0.1, 0.5):
        sm = dge_correction_matrix(x, E2M1, DgeConfig(epsilon=eps))
        assert sm.max() <= 0.2 * eps ** -0.8 + 1e-12


def test_correction_rejects_out_of_range():
    with pytest.raises(ValueError):
        dge_correction_matrix(np.array([6.01]))
    with pytest.raises(ValueError):
        dge_correction_matrix(np.array([np.nan]))


def test_matrix_matches_scalar():
    rng = np.random.default_rng(0)
    x = rng.uniform(-6, 6, 500)
    x[:15] = E2M1.values  # representable points exercise interval ownership
    cfg = DgeConfig()
    mat = dge_correction_matrix(x, E2M1, cfg)
    for xi, mi in zip(x, mat):
        iv = locate(xi)
        assert mi == pytest.approx(dge_derivative(xi, iv.lo, iv.delta, cfg), rel=1e-14)


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1))
def test_scale_cancellation(seed):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((6, 5)) * rng.uniform(0.01, 3)
    g = rng.standard_normal((6, 5))
    sf = 6.0 / np.abs(w).max(axis=0)  # per-column
    w_scaled = np.clip(w * sf, -6.0, 6.0)  # absmax entry may round a hair past 6
    explicit = (g * (1.0 / sf) * dge_correction_matrix(w_scaled)) * sf
    got = dge_weight_backward(g, w_scaled)
    np.testing.assert_allclose(got, explicit, rtol=1e-12, atol=0)


def test_surrogate_is_soft_version_of_hard_quantizer():
    # with large k the surrogate approaches a step at each midpoint
    x = np.array([2.1, 2.4, 2.6, 2.9, -4.2, 5.6])
    np.testing.assert_allclose(surrogate_quantize(x, E2M1, k=200), quantize_values(x, E2M1), atol=0.02)


def test_weight_backward_shape_check():
    with pytest.raises(ValueError):
        dge_weight_backward(np.ones((2, 2)), np.ones((2, 3)))
