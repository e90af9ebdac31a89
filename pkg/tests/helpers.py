"""Shared data generators and independent reference implementations for tests."""

import numpy as np

from tsiv import TwoSampleData


def random_dataset(rng, q=3, n_a=400, n_b=500, beta=1.0, heterogeneous=True):
    """Well-conditioned endogenous draw; instrument laws differ across samples."""
    gamma = rng.uniform(0.5, 1.5, size=q)
    mix_a = np.eye(q) + 0.3 * rng.standard_normal((q, q)) / np.sqrt(q)
    mix_b = mix_a if not heterogeneous else np.eye(q) + 0.3 * rng.standard_normal((q, q)) / np.sqrt(q)
    z_a = rng.standard_normal((n_a, q)) @ mix_a + rng.uniform(-1, 1, size=q)
    z_b = rng.standard_normal((n_b, q)) @ mix_b + rng.uniform(-1, 1, size=q)
    v_a = rng.standard_normal(n_a)
    u_b = rng.standard_normal(n_b)
    v_b = 0.5 * u_b + np.sqrt(1 - 0.25) * rng.standard_normal(n_b)
    x_a = z_a @ gamma + v_a
    x_b = z_b @ gamma + v_b
    y_b = beta * x_b + u_b
    return TwoSampleData(z_a=z_a, x_a=x_a, z_b=z_b, y_b=y_b)


def two_stage_oracle(data):
    """Literal two-stage regression on centered data.

    First stage: exposure on instruments in sample a by least squares.
    Second stage: outcome on the predicted exposure in sample b.
    """
    z_a = data.z_a - data.z_a.mean(axis=0)
    x_a = data.x_a - data.x_a.mean()
    z_b = data.z_b - data.z_b.mean(axis=0)
    y_b = data.y_b - data.y_b.mean()
    gamma, *_ = np.linalg.lstsq(z_a, x_a, rcond=None)
    x_hat = z_b @ gamma
    return float(x_hat @ y_b) / float(x_hat @ x_hat)


def naive_variance_oracle(data):
    """Two regressions read off literally: OLS variance of the second-stage slope.

    First stage in sample a, prediction onto sample b, second-stage slope
    variance sigma^2 / sum(x_hat^2) with the residual variance on
    denominator n_b (the convention of the quadratic-identity definition).
    """
    z_a = data.z_a - data.z_a.mean(axis=0)
    x_a = data.x_a - data.x_a.mean()
    z_b = data.z_b - data.z_b.mean(axis=0)
    y_b = data.y_b - data.y_b.mean()
    gamma, *_ = np.linalg.lstsq(z_a, x_a, rcond=None)
    x_hat = z_b @ gamma
    beta = float(x_hat @ y_b) / float(x_hat @ x_hat)
    resid = y_b - beta * x_hat
    sigma2 = float(resid @ resid) / y_b.shape[0]
    return sigma2 / float(x_hat @ x_hat)
