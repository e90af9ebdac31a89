"""Data containers and exact sample cross-moments for two-sample IV analyses.

Sample a carries the instrument-exposure relation and sample b the
instrument-outcome relation; the outcome in sample a and the exposure in
sample b are unobserved by construction of the two-sample problem.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from ._linalg import RCOND_TOL, rcond_sym, spd_solve, symmetrize
from .exceptions import DegenerateMoments

__all__ = [
    "TwoSampleData",
    "SampleMoments",
    "NoiseParams",
    "StructuralParams",
    "compute_moments",
    "CovarianceEqualityTest",
    "covariance_homogeneity_test",
]

_SYM_TOL = 1e-8


def _as_matrix(value, name: str) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array, got shape {arr.shape}")
    return arr


def _as_vector(value, name: str) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-D array, got shape {arr.shape}")
    return arr


def _freeze(obj, **arrays: np.ndarray) -> None:
    # Frozen dataclasses cannot reassign fields; go through object.__setattr__
    # once, and mark the arrays read-only so instances stay immutable.
    for name, arr in arrays.items():
        arr.setflags(write=False)
        object.__setattr__(obj, name, arr)


@dataclass(frozen=True)
class TwoSampleData:
    """Individual-level inputs for the two-sample IV problem.

    Attributes
    ----------
    z_a : ndarray, shape (n_a, q)
        Instruments in the exposure sample.
    x_a : ndarray, shape (n_a,)
        Exposure in sample a.
    z_b : ndarray, shape (n_b, q)
        Instruments in the outcome sample.
    y_b : ndarray, shape (n_b,)
        Outcome in sample b.
    """

    z_a: np.ndarray
    x_a: np.ndarray
    z_b: np.ndarray
    y_b: np.ndarray

    def __post_init__(self) -> None:
        z_a = _as_matrix(self.z_a, "z_a")
        x_a = _as_vector(self.x_a, "x_a")
        z_b = _as_matrix(self.z_b, "z_b")
        y_b = _as_vector(self.y_b, "y_b")
        if z_a.shape[1] != z_b.shape[1]:
            raise ValueError(
                f"instrument count differs between samples: {z_a.shape[1]} vs {z_b.shape[1]}"
            )
        q = z_a.shape[1]
        if q < 1:
            raise ValueError("need at least one instrument column")
        if z_a.shape[0] != x_a.shape[0]:
            raise ValueError("z_a and x_a disagree on the number of rows")
        if z_b.shape[0] != y_b.shape[0]:
            raise ValueError("z_b and y_b disagree on the number of rows")
        for name, arr, n in (("sample a", z_a, z_a.shape[0]), ("sample b", z_b, z_b.shape[0])):
            if n < q + 1:
                raise ValueError(f"{name} has {n} rows; need at least q + 1 = {q + 1}")
        for name, arr in (("z_a", z_a), ("x_a", x_a), ("z_b", z_b), ("y_b", y_b)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
        _freeze(self, z_a=z_a, x_a=x_a, z_b=z_b, y_b=y_b)

    @property
    def q(self) -> int:
        return self.z_a.shape[1]

    @property
    def n_a(self) -> int:
        return self.z_a.shape[0]

    @property
    def n_b(self) -> int:
        return self.z_b.shape[0]


@dataclass(frozen=True)
class SampleMoments:
    """Cross-moments with denominator n, plus residual and total variances.

    ``var_x_given_z_a`` and ``var_y_given_z_b`` are the residual variances of
    the within-sample instrument regressions (degrees-of-freedom corrected);
    ``var_x_a`` and ``var_y_b`` are total second moments under the same
    centering convention as the cross-moments.  The totals feed the
    second-stage ("naive") variance and the first-stage F diagnostic.
    """

    s_zz_a: np.ndarray
    s_zx_a: np.ndarray
    s_zz_b: np.ndarray
    s_zy_b: np.ndarray
    n_a: int
    n_b: int
    var_x_given_z_a: float
    var_y_given_z_b: float
    var_x_a: float
    var_y_b: float
    centered: bool = True

    def __post_init__(self) -> None:
        s_zz_a = _as_matrix(self.s_zz_a, "s_zz_a")
        s_zx_a = _as_vector(self.s_zx_a, "s_zx_a")
        s_zz_b = _as_matrix(self.s_zz_b, "s_zz_b")
        s_zy_b = _as_vector(self.s_zy_b, "s_zy_b")
        q = s_zx_a.shape[0]
        for name, mat in (("s_zz_a", s_zz_a), ("s_zz_b", s_zz_b)):
            if mat.shape != (q, q):
                raise ValueError(f"{name} must be {q}x{q}, got {mat.shape}")
            scale = max(1.0, float(np.abs(mat).max()))
            if float(np.abs(mat - mat.T).max()) > _SYM_TOL * scale:
                raise ValueError(f"{name} is not symmetric")
            eig = np.linalg.eigvalsh(symmetrize(mat))
            if eig.min() < -_SYM_TOL * max(1.0, float(eig.max())):
                raise ValueError(f"{name} is not positive semidefinite")
        if s_zy_b.shape[0] != q:
            raise ValueError("s_zy_b length must equal the instrument count")
        for name, n in (("n_a", self.n_a), ("n_b", self.n_b)):
            if int(n) < 1:
                raise ValueError(f"{name} must be a positive integer")
        object.__setattr__(self, "n_a", int(self.n_a))
        object.__setattr__(self, "n_b", int(self.n_b))
        for name in ("var_x_given_z_a", "var_y_given_z_b", "var_x_a", "var_y_b"):
            value = float(getattr(self, name))
            if not np.isfinite(value) or value < -_SYM_TOL:
                raise ValueError(f"{name} must be a finite nonnegative number")
            object.__setattr__(self, name, max(0.0, value))
        _freeze(
            self,
            s_zz_a=symmetrize(s_zz_a),
            s_zx_a=s_zx_a,
            s_zz_b=symmetrize(s_zz_b),
            s_zy_b=s_zy_b,
        )

    @property
    def q(self) -> int:
        return self.s_zx_a.shape[0]


@dataclass(frozen=True)
class NoiseParams:
    """Covariance of the exposure/outcome noise pair (v, u) within one sample."""

    var_v: float
    var_u: float
    cov_uv: float

    def __post_init__(self) -> None:
        if self.var_v <= 0 or self.var_u <= 0:
            raise ValueError("noise variances must be positive")
        if self.cov_uv**2 > self.var_v * self.var_u:
            raise ValueError("noise covariance matrix is not positive semidefinite")

    def cov_matrix(self) -> np.ndarray:
        return np.array([[self.var_v, self.cov_uv], [self.cov_uv, self.var_u]])


@dataclass(frozen=True)
class StructuralParams:
    """Ground truth of the linear structural model, used on the simulation side.

    ``beta`` is the outcome-equation slope in sample b (the estimand);
    ``beta_a`` is the slope of the hidden sample-a outcome equation, which the
    estimators never see and which may differ from ``beta``.
    """

    beta: float
    gamma: np.ndarray
    noise_a: NoiseParams
    noise_b: NoiseParams
    beta_a: float | None = None

    def __post_init__(self) -> None:
        gamma = _as_vector(self.gamma, "gamma")
        if gamma.shape[0] < 1:
            raise ValueError("gamma must have at least one coefficient")
        _freeze(self, gamma=gamma)


def compute_moments(data: TwoSampleData, *, center: bool = True) -> SampleMoments:
    """Compute the sample cross-moments consumed by every estimator.

    Parameters
    ----------
    data : TwoSampleData
        Individual-level inputs.
    center : bool, default True
        Subtract per-sample column means first.  Centering realizes intercept
        handling for data that are not mean zero; with ``center=True`` the
        ``s_zz`` blocks equal the sample covariance matrices (denominator n).

    Returns
    -------
    SampleMoments
        Cross-moments with denominator n and residual variances of the
        within-sample instrument regressions, with denominator n - q
        (n - q - 1 when centered).

    Raises
    ------
    DegenerateMoments
        If either instrument moment matrix is numerically singular, or there
        are too few rows to estimate a residual variance.
    """
    z_a, x_a = data.z_a, data.x_a
    z_b, y_b = data.z_b, data.y_b
    if center:
        z_a = z_a - z_a.mean(axis=0)
        x_a = x_a - x_a.mean()
        z_b = z_b - z_b.mean(axis=0)
        y_b = y_b - y_b.mean()
    n_a, n_b, q = data.n_a, data.n_b, data.q

    s_zz_a = symmetrize(z_a.T @ z_a / n_a)
    s_zx_a = z_a.T @ x_a / n_a
    s_zz_b = symmetrize(z_b.T @ z_b / n_b)
    s_zy_b = z_b.T @ y_b / n_b
    for name, mat in (("s_zz_a", s_zz_a), ("s_zz_b", s_zz_b)):
        if rcond_sym(mat) < RCOND_TOL:
            raise DegenerateMoments(
                f"{name} is numerically singular (reciprocal condition below {RCOND_TOL:g})"
            )

    dof_a = n_a - q - (1 if center else 0)
    dof_b = n_b - q - (1 if center else 0)
    if dof_a < 1 or dof_b < 1:
        raise DegenerateMoments(
            "too few rows to estimate residual variances; "
            f"need n > q + {1 if center else 0} in both samples"
        )
    gamma_a = spd_solve(s_zz_a, s_zx_a, name="s_zz_a")
    resid_a = x_a - z_a @ gamma_a
    coef_b = spd_solve(s_zz_b, s_zy_b, name="s_zz_b")
    resid_b = y_b - z_b @ coef_b

    return SampleMoments(
        s_zz_a=s_zz_a,
        s_zx_a=s_zx_a,
        s_zz_b=s_zz_b,
        s_zy_b=s_zy_b,
        n_a=n_a,
        n_b=n_b,
        var_x_given_z_a=float(resid_a @ resid_a) / dof_a,
        var_y_given_z_b=float(resid_b @ resid_b) / dof_b,
        var_x_a=float(x_a @ x_a) / n_a,
        var_y_b=float(y_b @ y_b) / n_b,
        centered=center,
    )


@dataclass(frozen=True)
class CovarianceEqualityTest:
    """Box-style test of equal instrument covariance across the two samples."""

    statistic: float
    df: int
    p_value: float


def covariance_homogeneity_test(moments: SampleMoments) -> CovarianceEqualityTest:
    """Box's M test comparing the two instrument covariance matrices.

    Informational: heterogeneous instrument covariances are supported by the
    estimators, not an error.  The chi-square approximation assumes roughly
    elliptical instruments, so treat the p-value as a coarse screen.
    """
    q = moments.q
    n_a, n_b = moments.n_a, moments.n_b
    if n_a < 2 or n_b < 2:
        raise ValueError("need at least two observations per sample")
    s_a = moments.s_zz_a * (n_a / (n_a - 1))
    s_b = moments.s_zz_b * (n_b / (n_b - 1))
    pooled = ((n_a - 1) * s_a + (n_b - 1) * s_b) / (n_a + n_b - 2)
    logdets = []
    for name, mat in (("pooled s_zz", pooled), ("s_zz_a", s_a), ("s_zz_b", s_b)):
        sign, logdet = np.linalg.slogdet(mat)
        if sign <= 0:
            raise DegenerateMoments(f"{name} has non-positive determinant")
        logdets.append(logdet)
    m_stat = (n_a + n_b - 2) * logdets[0] - (n_a - 1) * logdets[1] - (n_b - 1) * logdets[2]
    c1 = (1.0 / (n_a - 1) + 1.0 / (n_b - 1) - 1.0 / (n_a + n_b - 2)) * (
        (2 * q**2 + 3 * q - 1) / (6.0 * (q + 1))
    )
    statistic = max(0.0, m_stat * (1.0 - c1))
    df = q * (q + 1) // 2
    return CovarianceEqualityTest(
        statistic=float(statistic), df=df, p_value=float(chi2.sf(statistic, df))
    )
