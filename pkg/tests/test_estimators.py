"""Tests for the GMM point and variance estimators."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsiv import (
    SampleMoments,
    TwoSampleData,
    WeightSpec,
    compute_moments,
    estimate,
    estimate_omega,
    first_stage_f,
    moment_function,
    naive_tstsls_variance,
    sandwich_variance,
    tscov_estimate,
    wald_ratio,
)
from tsiv.exceptions import (
    DegenerateMoments,
    NonPositiveDefiniteWeight,
    OmegaSingular,
    UnsupportedDimension,
    WeakInstrumentWarning,
)
from tsiv.simulation import SimulationConfig, generate

from helpers import naive_variance_oracle, random_dataset, two_stage_oracle


def synthetic_moments(q=3, gamma=None, beta=1.0, var_y_z=1.0, var_x_z=1.0,
                      s_zz_a=None, s_zz_b=None, n_a=100, n_b=100, var_y_total=None):
    """Population-style moments assembled directly, no data behind them."""
    gamma = np.ones(q) if gamma is None else np.asarray(gamma, dtype=float)
    s_zz_a = np.eye(q) if s_zz_a is None else np.asarray(s_zz_a, dtype=float)
    s_zz_b = np.eye(q) if s_zz_b is None else np.asarray(s_zz_b, dtype=float)
    var_y_total = (
        beta**2 * float(gamma @ s_zz_b @ gamma) + var_y_z
        if var_y_total is None
        else var_y_total
    )
    return SampleMoments(
        s_zz_a=s_zz_a,
        s_zx_a=s_zz_a @ gamma,
        s_zz_b=s_zz_b,
        s_zy_b=s_zz_b @ gamma * beta,
        n_a=n_a,
        n_b=n_b,
        var_x_given_z_a=var_x_z,
        var_y_given_z_b=var_y_z,
        var_x_a=float(gamma @ s_zz_a @ gamma) + var_x_z,
        var_y_b=var_y_total,
    )


# ---------------------------------------------------------------------------
# moment_function


def test_moment_function_zero_at_truth():
    gamma = np.array([0.5, -1.0, 2.0])
    m = synthetic_moments(q=3, gamma=gamma, beta=1.7)
    np.testing.assert_allclose(moment_function(m, 1.7), np.zeros(3), atol=1e-14)


def test_moment_function_linear_in_beta():
    gamma = np.array([0.5, -1.0, 2.0])
    beta0 = 1.7
    m = synthetic_moments(q=3, gamma=gamma, beta=beta0)
    np.testing.assert_allclose(moment_function(m, 0.0), gamma * beta0, rtol=1e-12)


def test_moment_function_matches_direct_solves():
    cfg = SimulationConfig(scenario="sim1", q=5, n_a=300, n_b=400, seed=21)
    m = compute_moments(generate(cfg, 0).data)
    # Direct evaluation of the displayed formula through plain LU solves.
    expected = np.linalg.solve(m.s_zz_b, m.s_zy_b) - np.linalg.solve(m.s_zz_a, m.s_zx_a) * 1.0
    np.testing.assert_allclose(moment_function(m, 1.0), expected, rtol=1e-10)


# ---------------------------------------------------------------------------
# estimate


def test_noise_free_recovery_any_fixed_weight():
    rng = np.random.default_rng(31)
    q = 4
    gamma = rng.uniform(0.5, 1.5, q)
    beta = -2.5
    z_a = rng.standard_normal((200, q))
    z_b = rng.standard_normal((250, q)) * 1.7
    data = TwoSampleData(z_a=z_a, x_a=z_a @ gamma, z_b=z_b, y_b=(z_b @ gamma) * beta)
    m = compute_moments(data)
    wmat = np.diag(rng.uniform(0.5, 2.0, q))
    specs = (WeightSpec.tstsls(), WeightSpec.identity(), WeightSpec.custom(wmat),
             WeightSpec.optimal())
    for spec in specs:
        est = estimate(m, spec)
        assert est.beta_hat == pytest.approx(beta, abs=1e-10)


def test_exactly_zero_moment_covariance_raises_for_optimal():
    m = synthetic_moments(q=2, beta=1.0, var_y_z=0.0, var_x_z=0.0)
    with pytest.raises(OmegaSingular):
        estimate(m, WeightSpec.optimal())


def test_q1_weight_invariance_and_wald_agreement():
    rng = np.random.default_rng(32)
    data = random_dataset(rng, q=1, n_a=300, n_b=300)
    m = compute_moments(data)
    estimates = [
        estimate(m, WeightSpec.tstsls()).beta_hat,
        estimate(m, WeightSpec.identity()).beta_hat,
        estimate(m, WeightSpec.optimal()).beta_hat,
        estimate(m, WeightSpec.custom([[3.7]])).beta_hat,
        wald_ratio(m).beta_hat,
    ]
    for value in estimates[1:]:
        assert value == pytest.approx(estimates[0], rel=1e-12)


def test_tstsls_matches_literal_two_stage_regression():
    rng = np.random.default_rng(33)
    for q in (1, 2, 5):
        data = random_dataset(rng, q=q, n_a=250, n_b=320)
        m = compute_moments(data)
        est = estimate(m, WeightSpec.tstsls())
        assert est.beta_hat == pytest.approx(two_stage_oracle(data), rel=1e-10)


def test_optimal_sandwich_collapses_to_efficient():
    rng = np.random.default_rng(34)
    data = random_dataset(rng, q=4, n_a=500, n_b=800)
    est = estimate(compute_moments(data), WeightSpec.optimal())
    assert est.se_efficient == pytest.approx(est.se_sandwich, rel=1e-8)


def test_custom_weight_must_be_spd():
    rng = np.random.default_rng(35)
    m = compute_moments(random_dataset(rng, q=2))
    with pytest.raises(NonPositiveDefiniteWeight):
        estimate(m, WeightSpec.custom(np.array([[1.0, 2.0], [2.0, 1.0]])))
    with pytest.raises(NonPositiveDefiniteWeight):
        estimate(m, WeightSpec.custom(np.array([[1.0, 0.5], [0.0, 1.0]])))


def test_estimate_reports_first_stage_and_ci():
    rng = np.random.default_rng(36)
    data = random_dataset(rng, q=3, n_a=400, n_b=400)
    est = estimate(compute_moments(data))
    lo, hi = est.ci_95
    assert lo < est.beta_hat < hi
    assert hi - est.beta_hat == pytest.approx(1.96 * est.se_sandwich, rel=1e-12)
    assert est.first_stage_f > 10
    assert not est.weak_instrument


# ---------------------------------------------------------------------------
# estimate_omega


def test_omega_zero_when_both_terms_vanish():
    m = synthetic_moments(q=2, beta=0.0, var_y_z=0.0, var_x_z=1.0)
    np.testing.assert_allclose(estimate_omega(m, 0.0), np.zeros((2, 2)), atol=0)


def test_omega_symmetric_two_term_case():
    s = np.array([[2.0, 0.5], [0.5, 1.0]])
    m = synthetic_moments(q=2, s_zz_a=s, s_zz_b=s, n_a=50, n_b=50,
                          var_y_z=0.7, var_x_z=0.7, beta=1.0)
    expected = 2 * 0.7 / 50 * np.linalg.inv(s)
    np.testing.assert_allclose(estimate_omega(m, 1.0), expected, rtol=1e-12)


def test_omega_matches_direct_assembly():
    cfg = SimulationConfig(scenario="sim1", q=4, n_a=500, n_b=700, seed=41)
    m = compute_moments(generate(cfg, 0).data)
    pilot = estimate(m, WeightSpec.tstsls()).beta_hat
    direct = (
        np.linalg.solve(m.s_zz_b, np.eye(4)) * m.var_y_given_z_b / m.n_b
        + np.linalg.solve(m.s_zz_a, np.eye(4)) * pilot**2 * m.var_x_given_z_a / m.n_a
    )
    np.testing.assert_allclose(estimate_omega(m, pilot), direct, rtol=1e-10)


# ---------------------------------------------------------------------------
# sandwich_variance


def test_sandwich_q1_reduction():
    m = synthetic_moments(q=1, gamma=np.array([0.8]), s_zz_a=np.array([[2.0]]),
                          s_zz_b=np.array([[3.0]]), var_y_z=0.9, var_x_z=0.4, beta=1.3)
    omega = estimate_omega(m, 1.3)
    ratio = float(m.s_zx_a[0] / m.s_zz_a[0, 0])
    expected = float(omega[0, 0]) / ratio**2
    assert sandwich_variance(m, np.eye(1), omega) == pytest.approx(expected, rel=1e-12)


def test_sandwich_collapse_at_inverse_omega():
    rng = np.random.default_rng(51)
    m = compute_moments(random_dataset(rng, q=3))
    est = estimate(m, WeightSpec.tstsls())
    omega = estimate_omega(m, est.beta_hat)
    w = np.linalg.inv(omega)
    gamma_hat = est.gamma_hat_a
    expected = 1.0 / float(gamma_hat @ w @ gamma_hat)
    assert sandwich_variance(m, w, omega) == pytest.approx(expected, rel=1e-10)


def test_sandwich_linear_in_omega():
    rng = np.random.default_rng(52)
    m = compute_moments(random_dataset(rng, q=3))
    omega = estimate_omega(m, 1.0)
    w = np.asarray(m.s_zz_b)
    assert sandwich_variance(m, w, 2.0 * omega) == pytest.approx(
        2.0 * sandwich_variance(m, w, omega), rel=1e-12
    )


def test_optimal_weight_never_worse_than_tstsls_weight():
    rng = np.random.default_rng(53)
    for _ in range(20):
        m = compute_moments(random_dataset(rng, q=4, n_a=200, n_b=260))
        beta0 = estimate(m, WeightSpec.tstsls()).beta_hat
        omega = estimate_omega(m, beta0)
        v_opt = sandwich_variance(m, np.linalg.inv(omega), omega)
        v_tstsls = sandwich_variance(m, np.asarray(m.s_zz_b), omega)
        assert v_opt <= v_tstsls + 1e-10


def test_homogeneous_szz_collapses_optimal_to_tstsls():
    s = np.array([[1.5, 0.3, 0.0], [0.3, 1.0, 0.2], [0.0, 0.2, 0.8]])
    m = synthetic_moments(q=3, gamma=np.array([1.0, -0.5, 0.7]), beta=2.0,
                          s_zz_a=s, s_zz_b=s, var_y_z=1.0, var_x_z=0.5,
                          n_a=200, n_b=200)
    # With equal instrument moments the moment covariance is proportional to
    # the inverse TSTSLS weight, so the two estimates coincide.
    est_t = estimate(m, WeightSpec.tstsls())
    est_o = estimate(m, WeightSpec.optimal())
    assert est_o.beta_hat == pytest.approx(est_t.beta_hat, rel=1e-8)


@settings(max_examples=20, deadline=None)
@given(c=st.floats(min_value=0.2, max_value=5.0, allow_nan=False))
def test_equivariance_in_y_and_x(c):
    rng = np.random.default_rng(54)
    data = random_dataset(rng, q=2, n_a=150, n_b=160)
    base = estimate(compute_moments(data), WeightSpec.optimal()).beta_hat
    scaled_y = TwoSampleData(z_a=data.z_a, x_a=data.x_a, z_b=data.z_b, y_b=c * data.y_b)
    assert estimate(compute_moments(scaled_y), WeightSpec.optimal()).beta_hat == pytest.approx(
        c * base, rel=1e-12
    )
    scaled_x = TwoSampleData(z_a=data.z_a, x_a=c * data.x_a, z_b=data.z_b, y_b=data.y_b)
    assert estimate(compute_moments(scaled_x), WeightSpec.optimal()).beta_hat == pytest.approx(
        base / c, rel=1e-12
    )


# ---------------------------------------------------------------------------
# naive_tstsls_variance


def test_naive_equals_efficient_under_null():
    # Population moments at beta = 0: the outcome's total and conditional
    # variances coincide, so the naive and efficient variances agree.
    m = synthetic_moments(q=3, gamma=np.array([1.0, 0.5, -0.5]), beta=0.0,
                          var_y_z=1.3, var_x_z=0.6, var_y_total=1.3,
                          n_a=150, n_b=150)
    naive = naive_tstsls_variance(m, 0.0)
    omega = estimate_omega(m, 0.0)
    gamma_hat = np.linalg.solve(m.s_zz_a, m.s_zx_a)
    efficient = 1.0 / float(gamma_hat @ np.linalg.solve(omega, gamma_hat))
    assert naive == pytest.approx(efficient, rel=1e-10)


def test_naive_zero_for_zero_outcome():
    rng = np.random.default_rng(61)
    z = rng.standard_normal((100, 2))
    x = z @ np.array([1.0, -1.0]) + rng.standard_normal(100)
    data = TwoSampleData(z_a=z, x_a=x, z_b=z, y_b=np.zeros(100))
    m = compute_moments(data)
    assert naive_tstsls_variance(m, 0.0) == 0.0


def test_naive_matches_two_regression_oracle():
    cfg = SimulationConfig(scenario="sim1", q=4, n_a=400, n_b=500, seed=62)
    data = generate(cfg, 0).data
    m = compute_moments(data)
    est = estimate(m, WeightSpec.tstsls())
    assert est.se_naive**2 == pytest.approx(naive_variance_oracle(data), rel=1e-10)


def test_moment_covariance_dominates_its_outcome_term():
    # The outcome-only covariance stands in for the full one in the naive
    # route; the full covariance exceeds it in the matrix order at the true
    # slope, with equality exactly at slope zero.
    rng = np.random.default_rng(63)
    m = compute_moments(random_dataset(rng, q=3, beta=1.5))
    omega_full = estimate_omega(m, 1.5)
    omega_outcome_only = np.linalg.solve(m.s_zz_b, np.eye(3)) * m.var_y_given_z_b / m.n_b
    eig = np.linalg.eigvalsh(omega_full - omega_outcome_only)
    assert eig.min() >= -1e-15
    np.testing.assert_allclose(estimate_omega(m, 0.0), omega_outcome_only, rtol=1e-12)


# ---------------------------------------------------------------------------
# tscov / wald


def test_tscov_direct_ratio_and_guard():
    m = synthetic_moments(q=1, gamma=np.array([1.0]))
    m_ratio = SampleMoments(
        s_zz_a=[[1.0]], s_zx_a=[1.0], s_zz_b=[[1.0]], s_zy_b=[3.0],
        n_a=10, n_b=10, var_x_given_z_a=1.0, var_y_given_z_b=1.0,
        var_x_a=2.0, var_y_b=10.0,
    )
    assert tscov_estimate(m_ratio) == pytest.approx(3.0, abs=0)
    with pytest.raises(UnsupportedDimension):
        tscov_estimate(synthetic_moments(q=2))
    assert tscov_estimate(m) == pytest.approx(1.0)


def test_tscov_population_limit_under_heterogeneity():
    # Population moments with doubled instrument variance in sample b: the
    # ratio estimate sits at beta * var_b / var_a while the normalized
    # estimate stays at beta.
    beta0 = 1.0
    m = synthetic_moments(
        q=1, gamma=np.array([1.0]), beta=beta0,
        s_zz_a=np.array([[1.0]]), s_zz_b=np.array([[2.0]]),
    )
    assert tscov_estimate(m) == pytest.approx(beta0 * 2.0, rel=1e-12)
    assert estimate(m, WeightSpec.tstsls()).beta_hat == pytest.approx(beta0, rel=1e-12)


def test_wald_ratio_values_and_invariance():
    m = SampleMoments(
        s_zz_a=[[1.0]], s_zx_a=[1.0], s_zz_b=[[1.0]], s_zy_b=[2.0],
        n_a=50, n_b=50, var_x_given_z_a=0.5, var_y_given_z_b=0.5,
        var_x_a=1.5, var_y_b=4.5,
    )
    est = wald_ratio(m)
    assert est.beta_hat == pytest.approx(2.0, abs=0)
    # Scaling the instrument leaves the ratio unchanged.
    c = 3.0
    m_scaled = SampleMoments(
        s_zz_a=[[c**2]], s_zx_a=[c], s_zz_b=[[c**2]], s_zy_b=[2.0 * c],
        n_a=50, n_b=50, var_x_given_z_a=0.5, var_y_given_z_b=0.5,
        var_x_a=1.5, var_y_b=4.5,
    )
    assert wald_ratio(m_scaled).beta_hat == pytest.approx(2.0, rel=1e-12)
    with pytest.raises(UnsupportedDimension):
        wald_ratio(synthetic_moments(q=2))


def test_wald_ratio_agrees_with_identity_weight_estimate():
    rng = np.random.default_rng(71)
    data = random_dataset(rng, q=1, n_a=400, n_b=300)
    m = compute_moments(data)
    assert wald_ratio(m).beta_hat == pytest.approx(
        estimate(m, WeightSpec.identity()).beta_hat, rel=1e-12
    )


def test_wald_ratio_weak_instrument_warning():
    rng = np.random.default_rng(72)
    n = 200
    z = rng.standard_normal((n, 1))
    x = 0.02 * z[:, 0] + rng.standard_normal(n)
    y = x + rng.standard_normal(n)
    data = TwoSampleData(z_a=z, x_a=x, z_b=rng.standard_normal((n, 1)), y_b=y)
    m = compute_moments(data)
    assert first_stage_f(m) < 4.0
    with pytest.warns(WeakInstrumentWarning):
        est = wald_ratio(m)
    assert est.weak_instrument


def test_zero_first_stage_raises():
    m = SampleMoments(
        s_zz_a=[[1.0]], s_zx_a=[0.0], s_zz_b=[[1.0]], s_zy_b=[1.0],
        n_a=50, n_b=50, var_x_given_z_a=1.0, var_y_given_z_b=1.0,
        var_x_a=1.0, var_y_b=2.0,
    )
    with pytest.raises(DegenerateMoments):
        estimate(m, WeightSpec.tstsls())
    with pytest.raises(DegenerateMoments):
        wald_ratio(m)
