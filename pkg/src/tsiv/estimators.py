"""GMM point and variance estimators for the heterogeneous two-sample IV problem.

The estimator family minimizes a quadratic form in the moment vector

    m(beta) = (S_zz_b)^-1 S_zy_b - (S_zz_a)^-1 S_zx_a * beta,

whose normalization by the per-sample instrument moment matrices is what makes
the family consistent when the instrument distributions differ between the
two samples.  The weight ``W = S_zz_b`` recovers two-sample two-stage least
squares; ``W`` proportional to the inverse moment variance is efficient.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from ._linalg import (
    RCOND_TOL,
    is_spd,
    rcond_sym,
    spd_factor,
    spd_solve,
    symmetrize,
)
from .exceptions import (
    DegenerateMoments,
    NonPositiveDefiniteWeight,
    OmegaSingular,
    UnsupportedDimension,
    WeakInstrumentWarning,
)
from .moments import SampleMoments, _freeze

__all__ = [
    "WeightSpec",
    "TsivEstimate",
    "moment_function",
    "estimate",
    "estimate_omega",
    "sandwich_variance",
    "naive_tstsls_variance",
    "first_stage_f",
    "tscov_estimate",
    "wald_ratio",
]

# Fixed normal quantile for the 95% asymptotic confidence interval.
Z_95 = 1.96

# First-stage F below this flags the estimate as weak-instrument suspect.
WEAK_F_THRESHOLD = 10.0

_KINDS = ("tstsls", "identity", "optimal", "custom")


@dataclass(frozen=True)
class WeightSpec:
    """GMM weight choice: a named rule or an explicit symmetric PD matrix."""

    kind: str
    matrix: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"unknown weight kind {self.kind!r}; expected one of {_KINDS}")
        if (self.kind == "custom") != (self.matrix is not None):
            raise ValueError("a matrix must be supplied exactly when kind='custom'")
        if self.matrix is not None:
            mat = np.array(self.matrix, dtype=float)
            if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
                raise ValueError("custom weight must be a square matrix")
            _freeze(self, matrix=mat)

    @classmethod
    def tstsls(cls) -> "WeightSpec":
        return cls("tstsls")

    @classmethod
    def identity(cls) -> "WeightSpec":
        return cls("identity")

    @classmethod
    def optimal(cls) -> "WeightSpec":
        return cls("optimal")

    @classmethod
    def custom(cls, matrix) -> "WeightSpec":
        return cls("custom", matrix)


@dataclass(frozen=True)
class TsivEstimate:
    """Point estimate with its weight, moment covariance and variance estimates.

    ``se_efficient`` is populated only on the optimal-weight route and
    ``se_naive`` only on the TSTSLS route.  ``conservative`` marks estimates
    whose variances are upper bounds built from summary data.
    """

    beta_hat: float
    weight_used: np.ndarray
    omega_hat: np.ndarray
    se_sandwich: float
    ci_95: tuple[float, float]
    gamma_hat_a: np.ndarray
    first_stage_f: float
    weak_instrument: bool
    se_efficient: float | None = None
    se_naive: float | None = None
    conservative: bool = False

    def __post_init__(self) -> None:
        _freeze(
            self,
            weight_used=np.array(self.weight_used, dtype=float),
            omega_hat=np.array(self.omega_hat, dtype=float),
            gamma_hat_a=np.array(self.gamma_hat_a, dtype=float),
        )

    def to_dict(self) -> dict:
        """Plain-type summary for JSON reports (matrices omitted)."""
        return {
            "beta_hat": float(self.beta_hat),
            "se_sandwich": float(self.se_sandwich),
            "se_efficient": None if self.se_efficient is None else float(self.se_efficient),
            "se_naive": None if self.se_naive is None else float(self.se_naive),
            "ci_95": [float(self.ci_95[0]), float(self.ci_95[1])],
            "gamma_hat_a": [float(g) for g in self.gamma_hat_a],
            "first_stage_f": float(self.first_stage_f),
            "weak_instrument": bool(self.weak_instrument),
            "conservative": bool(self.conservative),
        }


def moment_function(moments: SampleMoments, beta: float) -> np.ndarray:
    """Evaluate the normalized moment vector at ``beta``; linear in ``beta``."""
    reduced_b = spd_solve(moments.s_zz_b, moments.s_zy_b, name="s_zz_b")
    gamma_a = spd_solve(moments.s_zz_a, moments.s_zx_a, name="s_zz_a")
    return reduced_b - gamma_a * float(beta)


def estimate_omega(moments: SampleMoments, beta: float) -> np.ndarray:
    """Estimated covariance of the moment vector at ``beta``.

    Sum of the outcome-regression coefficient variance (sample b) and
    ``beta**2`` times the exposure-regression coefficient variance (sample a):

        Omega = (S_zz_b)^-1 Var(y|z)/n_b + (S_zz_a)^-1 beta^2 Var(x|z)/n_a.
    """
    beta = float(beta)
    eye = np.eye(moments.q)
    inv_b = spd_solve(moments.s_zz_b, eye, name="s_zz_b")
    inv_a = spd_solve(moments.s_zz_a, eye, name="s_zz_a")
    omega = inv_b * (moments.var_y_given_z_b / moments.n_b) + inv_a * (
        beta**2 * moments.var_x_given_z_a / moments.n_a
    )
    return symmetrize(omega)


def sandwich_variance(moments: SampleMoments, weight: np.ndarray, omega: np.ndarray) -> float:
    """Bread-meat-bread asymptotic variance of the weighted estimator.

    Collapses to the efficient plug-in variance when ``weight`` is
    proportional to ``omega``'s inverse, and is linear in ``omega``.
    """
    gamma_a = spd_solve(moments.s_zz_a, moments.s_zx_a, name="s_zz_a")
    weight = np.asarray(weight, dtype=float)
    omega = np.asarray(omega, dtype=float)
    wg = weight @ gamma_a
    bread = float(gamma_a @ wg)
    if not np.isfinite(bread) or bread <= 0.0:
        raise DegenerateMoments("weighted first-stage quadratic form is not positive")
    meat = float(wg @ omega @ wg)
    return meat / bread**2


def naive_tstsls_variance(moments: SampleMoments, beta_hat: float) -> float:
    """Second-stage-only variance of the TSTSLS estimator.

    The residual variance of the second-stage regression expands exactly as
    Var(y_b) - 2*beta*gamma'S_zy_b + beta^2*gamma'S_zz_b*gamma with all terms
    on denominator n_b, so the result matches a literal regression of y_b on
    the predicted exposure whose residual variance uses denominator n_b.
    Consistent only under beta = 0; otherwise an upper bound in spirit, since
    it ignores the first-stage sampling noise ordering of the moment
    covariance.
    """
    beta_hat = float(beta_hat)
    gamma_a = spd_solve(moments.s_zz_a, moments.s_zx_a, name="s_zz_a")
    gram = float(gamma_a @ moments.s_zz_b @ gamma_a)
    if not np.isfinite(gram) or gram <= 0.0:
        raise DegenerateMoments("predicted exposure has zero variance in sample b")
    resid_var = (
        moments.var_y_b
        - 2.0 * beta_hat * float(gamma_a @ moments.s_zy_b)
        + beta_hat**2 * gram
    )
    return max(0.0, resid_var) / (moments.n_b * gram)


def first_stage_f(moments: SampleMoments) -> float:
    """F statistic of the instrument-exposure regression in sample a."""
    gamma_a = spd_solve(moments.s_zz_a, moments.s_zx_a, name="s_zz_a")
    explained = max(0.0, float(gamma_a @ moments.s_zx_a))
    if moments.var_x_given_z_a == 0.0:
        return float("inf")
    return moments.n_a * explained / (moments.q * moments.var_x_given_z_a)


def _solve_beta(gamma_a: np.ndarray, reduced_b: np.ndarray, weight: np.ndarray) -> float:
    wg = weight @ gamma_a
    denom = float(gamma_a @ wg)
    if not np.isfinite(denom) or denom <= 0.0:
        raise DegenerateMoments("weighted first-stage quadratic form is not positive")
    return float(wg @ reduced_b) / denom


def _invert_omega(omega: np.ndarray) -> np.ndarray:
    if rcond_sym(omega) < RCOND_TOL:
        raise OmegaSingular("estimated moment covariance is numerically singular")
    try:
        factor = spd_factor(omega, name="omega")
    except DegenerateMoments as exc:
        raise OmegaSingular(str(exc)) from exc
    return symmetrize(scipy.linalg.cho_solve(factor, np.eye(omega.shape[0])))


def _resolve_fixed_weight(moments: SampleMoments, weight: WeightSpec) -> np.ndarray:
    if weight.kind == "tstsls":
        return np.array(moments.s_zz_b)
    if weight.kind == "identity":
        return np.eye(moments.q)
    mat = weight.matrix
    if mat.shape != (moments.q, moments.q):
        raise NonPositiveDefiniteWeight(
            f"custom weight has shape {mat.shape}, expected ({moments.q}, {moments.q})"
        )
    if not is_spd(mat):
        raise NonPositiveDefiniteWeight("custom weight is not symmetric positive definite")
    return np.array(mat)


def estimate(moments: SampleMoments, weight: WeightSpec | None = None) -> TsivEstimate:
    """Closed-form weighted estimate with sandwich standard error.

    Parameters
    ----------
    moments : SampleMoments
        Cross-moments from :func:`tsiv.moments.compute_moments` or summary
        reconstruction.
    weight : WeightSpec, optional
        Defaults to the TSTSLS weight.  The optimal route runs a two-step
        update: pilot estimate under the TSTSLS weight, one moment-covariance
        update at the pilot, re-solve under its inverse.  All reported
        variance quantities are evaluated at the final point estimate.

    Raises
    ------
    DegenerateMoments
        Singular moment matrices or a zero first stage.
    NonPositiveDefiniteWeight
        Invalid custom weight.
    OmegaSingular
        Optimal route only: the moment covariance cannot be inverted.
    """
    if weight is None:
        weight = WeightSpec.tstsls()
    gamma_a = spd_solve(moments.s_zz_a, moments.s_zx_a, name="s_zz_a")
    reduced_b = spd_solve(moments.s_zz_b, moments.s_zy_b, name="s_zz_b")

    if weight.kind == "optimal":
        pilot = _solve_beta(gamma_a, reduced_b, np.asarray(moments.s_zz_b))
        omega_pilot = estimate_omega(moments, pilot)
        beta_hat = _solve_beta(gamma_a, reduced_b, _invert_omega(omega_pilot))
        omega_hat = estimate_omega(moments, beta_hat)
        weight_used = _invert_omega(omega_hat)
        var_sandwich = sandwich_variance(moments, weight_used, omega_hat)
        se_efficient = float(np.sqrt(1.0 / float(gamma_a @ weight_used @ gamma_a)))
    else:
        weight_used = _resolve_fixed_weight(moments, weight)
        beta_hat = _solve_beta(gamma_a, reduced_b, weight_used)
        omega_hat = estimate_omega(moments, beta_hat)
        var_sandwich = sandwich_variance(moments, weight_used, omega_hat)
        se_efficient = None

    se_sandwich = float(np.sqrt(var_sandwich))
    se_naive = None
    if weight.kind == "tstsls":
        se_naive = float(np.sqrt(naive_tstsls_variance(moments, beta_hat)))
    f_stat = first_stage_f(moments)
    return TsivEstimate(
        beta_hat=beta_hat,
        weight_used=weight_used,
        omega_hat=omega_hat,
        se_sandwich=se_sandwich,
        ci_95=(beta_hat - Z_95 * se_sandwich, beta_hat + Z_95 * se_sandwich),
        gamma_hat_a=gamma_a,
        first_stage_f=f_stat,
        weak_instrument=f_stat < WEAK_F_THRESHOLD,
        se_efficient=se_efficient,
        se_naive=se_naive,
    )


def tscov_estimate(moments: SampleMoments) -> float:
    """Covariance-ratio estimate s_zy_b / s_zx_a, single instrument only.

    Provided as a diagnostic: without the per-sample moment normalization its
    probability limit is the true slope times the ratio of the instrument
    variances, so it is inconsistent when the instrument distributions differ
    between the samples.
    """
    if moments.q != 1:
        raise UnsupportedDimension("covariance-ratio estimate requires exactly one instrument")
    s_zx = float(moments.s_zx_a[0])
    if s_zx == 0.0:
        raise DegenerateMoments("instrument-exposure covariance is zero")
    return float(moments.s_zy_b[0]) / s_zx


def wald_ratio(moments: SampleMoments) -> TsivEstimate:
    """Single-instrument ratio estimate; equals every weighted estimate at q = 1.

    Warns (WeakInstrumentWarning) when the first-stage t statistic is below 2,
    which at q = 1 is the same as a first-stage F below 4.
    """
    if moments.q != 1:
        raise UnsupportedDimension("the ratio estimator requires exactly one instrument")
    s_zz_a = float(moments.s_zz_a[0, 0])
    s_zz_b = float(moments.s_zz_b[0, 0])
    if s_zz_a <= 0.0 or s_zz_b <= 0.0:
        raise DegenerateMoments("instrument variance is zero")
    gamma = float(moments.s_zx_a[0]) / s_zz_a
    if gamma == 0.0:
        raise DegenerateMoments("first-stage coefficient is zero")
    beta_hat = (float(moments.s_zy_b[0]) / s_zz_b) / gamma
    omega = estimate_omega(moments, beta_hat)
    se = float(np.sqrt(float(omega[0, 0]) / gamma**2))
    f_stat = first_stage_f(moments)
    if f_stat < 4.0:
        warnings.warn(
            "first-stage t statistic below 2; the ratio estimate is biased towards zero",
            WeakInstrumentWarning,
            stacklevel=2,
        )
    return TsivEstimate(
        beta_hat=beta_hat,
        weight_used=np.eye(1),
        omega_hat=omega,
        se_sandwich=se,
        ci_95=(beta_hat - Z_95 * se, beta_hat + Z_95 * se),
        gamma_hat_a=np.array([gamma]),
        first_stage_f=f_stat,
        weak_instrument=f_stat < WEAK_F_THRESHOLD,
    )


def flag_conservative(est: TsivEstimate) -> TsivEstimate:
    """Return a copy marked as carrying conservative (upper bound) variances."""
    return replace(est, conservative=True)
