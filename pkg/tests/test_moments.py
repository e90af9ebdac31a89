"""Tests for the data containers and sample cross-moments."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsiv import TwoSampleData, compute_moments, covariance_homogeneity_test
from tsiv.exceptions import DegenerateMoments
from tsiv.simulation import SimulationConfig, generate

from helpers import random_dataset


def brute_force_cross_moments(z, w):
    """Double-loop summation, no matrix library: S_zz and S_zw with denominator n."""
    n = len(z)
    q = len(z[0])
    s_zz = [[sum(z[i][j] * z[i][k] for i in range(n)) / n for k in range(q)] for j in range(q)]
    s_zw = [sum(z[i][j] * w[i] for i in range(n)) / n for j in range(q)]
    return s_zz, s_zw


def brute_force_center(z, w):
    n = len(z)
    q = len(z[0])
    col_means = [sum(z[i][j] for i in range(n)) / n for j in range(q)]
    w_mean = sum(w) / n
    zc = [[z[i][j] - col_means[j] for j in range(q)] for i in range(n)]
    wc = [w[i] - w_mean for i in range(n)]
    return zc, wc


def test_two_row_example_uncentered():
    data = TwoSampleData(
        z_a=[[1.0], [-1.0]], x_a=[1.0, -1.0], z_b=[[1.0], [-1.0]], y_b=[2.0, -2.0]
    )
    m = compute_moments(data, center=False)
    assert m.s_zz_a[0, 0] == pytest.approx(1.0, abs=0)
    assert m.s_zz_b[0, 0] == pytest.approx(1.0, abs=0)
    assert m.s_zx_a[0] == pytest.approx(1.0, abs=0)
    assert m.s_zy_b[0] == pytest.approx(2.0, abs=0)
    assert m.var_x_given_z_a == pytest.approx(0.0, abs=1e-15)
    assert m.var_y_given_z_b == pytest.approx(0.0, abs=1e-15)


def test_constant_instrument_column_degenerate_after_centering():
    rng = np.random.default_rng(0)
    z = np.column_stack([np.ones(50), rng.standard_normal(50)])
    x = rng.standard_normal(50)
    data = TwoSampleData(z_a=z, x_a=x, z_b=z, y_b=x)
    with pytest.raises(DegenerateMoments):
        compute_moments(data, center=True)


def test_brute_force_oracle_on_sim1_seed7():
    cfg = SimulationConfig(scenario="sim1", q=3, n_a=20, n_b=20, seed=7)
    data = generate(cfg, 0).data
    m = compute_moments(data, center=True)

    zc_a, xc_a = brute_force_center(data.z_a.tolist(), data.x_a.tolist())
    zc_b, yc_b = brute_force_center(data.z_b.tolist(), data.y_b.tolist())
    s_zz_a, s_zx_a = brute_force_cross_moments(zc_a, xc_a)
    s_zz_b, s_zy_b = brute_force_cross_moments(zc_b, yc_b)
    np.testing.assert_allclose(m.s_zz_a, s_zz_a, rtol=1e-12)
    np.testing.assert_allclose(m.s_zx_a, s_zx_a, rtol=1e-12)
    np.testing.assert_allclose(m.s_zz_b, s_zz_b, rtol=1e-12)
    np.testing.assert_allclose(m.s_zy_b, s_zy_b, rtol=1e-12)

    # Residual variances cross-checked through an lstsq fit, a different path
    # from the package's Cholesky solve.
    zc_a = np.array(zc_a)
    xc_a = np.array(xc_a)
    gamma, *_ = np.linalg.lstsq(zc_a, xc_a, rcond=None)
    resid = xc_a - zc_a @ gamma
    assert m.var_x_given_z_a == pytest.approx(float(resid @ resid) / (20 - 3 - 1), rel=1e-10)


def test_centered_szz_equals_sample_covariance():
    rng = np.random.default_rng(3)
    data = random_dataset(rng, q=4, n_a=300, n_b=350)
    m = compute_moments(data, center=True)
    np.testing.assert_allclose(m.s_zz_a, np.cov(data.z_a.T, ddof=0), rtol=1e-12)
    np.testing.assert_allclose(m.s_zz_b, np.cov(data.z_b.T, ddof=0), rtol=1e-12)


def test_residual_variance_invariant_to_span_shift():
    rng = np.random.default_rng(4)
    data = random_dataset(rng, q=3, n_a=250, n_b=250)
    m = compute_moments(data)
    shift = data.z_b @ np.array([2.0, -1.0, 0.5])
    shifted = TwoSampleData(z_a=data.z_a, x_a=data.x_a, z_b=data.z_b, y_b=data.y_b + shift)
    m_shift = compute_moments(shifted)
    assert m_shift.var_y_given_z_b == pytest.approx(m.var_y_given_z_b, rel=1e-10)


@settings(max_examples=25, deadline=None)
@given(scale=st.floats(min_value=0.1, max_value=10.0, allow_nan=False))
def test_exposure_scaling_scales_s_zx(scale):
    rng = np.random.default_rng(11)
    data = random_dataset(rng, q=2, n_a=120, n_b=120)
    base = compute_moments(data)
    scaled = compute_moments(
        TwoSampleData(z_a=data.z_a, x_a=scale * data.x_a, z_b=data.z_b, y_b=data.y_b)
    )
    np.testing.assert_allclose(scaled.s_zx_a, scale * base.s_zx_a, rtol=1e-12)
    np.testing.assert_allclose(scaled.s_zz_a, base.s_zz_a, rtol=0, atol=0)


def test_row_permutation_leaves_moments_unchanged():
    rng = np.random.default_rng(12)
    data = random_dataset(rng, q=3, n_a=150, n_b=170)
    perm = rng.permutation(150)
    permuted = TwoSampleData(
        z_a=data.z_a[perm], x_a=data.x_a[perm], z_b=data.z_b, y_b=data.y_b
    )
    m0 = compute_moments(data)
    m1 = compute_moments(permuted)
    np.testing.assert_allclose(m1.s_zz_a, m0.s_zz_a, rtol=1e-12)
    np.testing.assert_allclose(m1.s_zx_a, m0.s_zx_a, rtol=1e-12)
    assert m1.var_x_given_z_a == pytest.approx(m0.var_x_given_z_a, rel=1e-10)


def test_total_variances_bound_residual_variances():
    rng = np.random.default_rng(13)
    data = random_dataset(rng, q=3, n_a=500, n_b=500)
    m = compute_moments(data)
    assert m.var_x_given_z_a <= m.var_x_a
    assert m.var_y_given_z_b <= m.var_y_b


def test_validation_errors():
    good_z = np.random.default_rng(1).standard_normal((10, 2))
    good_x = np.zeros(10)
    with pytest.raises(ValueError, match="instrument count differs"):
        TwoSampleData(z_a=good_z, x_a=good_x, z_b=good_z[:, :1], y_b=good_x)
    with pytest.raises(ValueError, match="non-finite"):
        bad = good_z.copy()
        bad[0, 0] = np.nan
        TwoSampleData(z_a=bad, x_a=good_x, z_b=good_z, y_b=good_x)
    with pytest.raises(ValueError, match="rows"):
        TwoSampleData(z_a=good_z[:2], x_a=good_x[:2], z_b=good_z, y_b=good_x)


def test_n_equals_q_plus_one_centered_degenerate():
    rng = np.random.default_rng(5)
    z = rng.standard_normal((4, 3))
    x = rng.standard_normal(4)
    data = TwoSampleData(z_a=z, x_a=x, z_b=z, y_b=x)
    with pytest.raises(DegenerateMoments, match="too few rows"):
        compute_moments(data, center=True)
    # Uncentered, one residual degree of freedom remains.
    compute_moments(data, center=False)


def test_moments_are_immutable():
    rng = np.random.default_rng(6)
    data = random_dataset(rng)
    m = compute_moments(data)
    with pytest.raises(ValueError):
        m.s_zz_a[0, 0] = 99.0
    with pytest.raises(ValueError):
        data.z_a[0, 0] = 99.0


def test_covariance_homogeneity_test_directions():
    rng = np.random.default_rng(14)
    n = 4000
    z = rng.standard_normal((n, 3))
    same = TwoSampleData(
        z_a=z, x_a=rng.standard_normal(n),
        z_b=rng.standard_normal((n, 3)), y_b=rng.standard_normal(n),
    )
    result_same = covariance_homogeneity_test(compute_moments(same))
    assert result_same.p_value > 0.01

    z_b = rng.standard_normal((n, 3)) * np.array([1.0, 2.0, 1.0])
    diff = TwoSampleData(
        z_a=z, x_a=rng.standard_normal(n), z_b=z_b, y_b=rng.standard_normal(n)
    )
    result_diff = covariance_homogeneity_test(compute_moments(diff))
    assert result_diff.p_value < 1e-6
    assert result_diff.df == 6
