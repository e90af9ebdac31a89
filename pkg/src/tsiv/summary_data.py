"""Estimation from marginal summary statistics plus instrument correlation matrices.

With only per-instrument marginal coefficients available, the cross-moment
matrices are rebuilt from externally supplied instrument correlation (LD)
matrices and instrument scales.  The conditional residual variances are not
recoverable from summaries, so the marginal variances stand in for them,
giving variance estimates that are upper bounds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._linalg import symmetrize
from .estimators import TsivEstimate, WeightSpec, estimate, flag_conservative
from .exceptions import LdNotPsd
from .moments import SampleMoments, _as_matrix, _as_vector, _freeze

__all__ = [
    "SummaryInputs",
    "repair_ld",
    "reconstruct_moments",
    "conservative_estimate",
    "summarize_moments",
]

# Eigenvalues this far below zero cannot be attributed to finite reference
# panels; beyond it the repair refuses rather than silently rewriting the LD.
LD_REPAIR_LIMIT = 1e-3

_LD_TOL = 1e-8


@dataclass(frozen=True)
class SummaryInputs:
    """GWAS-style summary statistics for the two samples.

    ``gamma_marginal`` / ``Gamma_marginal`` are marginal per-instrument
    regression coefficients (exposure on z_j in sample a, outcome on z_j in
    sample b); ``ld_a`` / ``ld_b`` instrument correlation matrices;
    ``scale_z_a`` / ``scale_z_b`` instrument standard deviations; the
    ``var_*_total`` fields are marginal variances used as conservative stand-ins
    for the unobservable conditional residual variances.
    """

    gamma_marginal: np.ndarray
    Gamma_marginal: np.ndarray
    se_gamma: np.ndarray
    se_Gamma: np.ndarray
    ld_a: np.ndarray
    ld_b: np.ndarray
    scale_z_a: np.ndarray
    scale_z_b: np.ndarray
    var_x_total_a: float
    var_y_total_b: float
    n_a: int
    n_b: int

    def __post_init__(self) -> None:
        gamma = _as_vector(self.gamma_marginal, "gamma_marginal")
        q = gamma.shape[0]
        vectors = {"gamma_marginal": gamma}
        for name in ("Gamma_marginal", "se_gamma", "se_Gamma", "scale_z_a", "scale_z_b"):
            vec = _as_vector(getattr(self, name), name)
            if vec.shape[0] != q:
                raise ValueError(f"{name} must have length {q}, got {vec.shape[0]}")
            vectors[name] = vec
        for name in ("se_gamma", "se_Gamma", "scale_z_a", "scale_z_b"):
            if np.any(vectors[name] <= 0):
                raise ValueError(f"{name} entries must be positive")
        matrices = {}
        for name in ("ld_a", "ld_b"):
            mat = _as_matrix(getattr(self, name), name)
            if mat.shape != (q, q):
                raise ValueError(f"{name} must be {q}x{q}, got {mat.shape}")
            if float(np.abs(mat - mat.T).max()) > _LD_TOL:
                raise ValueError(f"{name} is not symmetric")
            if float(np.abs(np.diag(mat) - 1.0).max()) > _LD_TOL:
                raise ValueError(f"{name} does not have a unit diagonal")
            matrices[name] = symmetrize(mat)
        if self.var_x_total_a <= 0 or self.var_y_total_b <= 0:
            raise ValueError("total variances must be positive")
        for name in ("n_a", "n_b"):
            if int(getattr(self, name)) < 2:
                raise ValueError(f"{name} must be at least 2")
            object.__setattr__(self, name, int(getattr(self, name)))
        _freeze(self, **vectors, **matrices)

    @property
    def q(self) -> int:
        return self.gamma_marginal.shape[0]


def repair_ld(ld: np.ndarray, *, name: str = "ld") -> np.ndarray:
    """Clip small negative eigenvalues of a correlation matrix to zero.

    Reference-panel LD estimates are finite-sample and often slightly
    indefinite.  Eigenvalues below ``-LD_REPAIR_LIMIT`` indicate a genuinely
    bad matrix and raise :class:`LdNotPsd`; smaller dips are clipped and the
    diagonal renormalized back to one.
    """
    ld = symmetrize(np.asarray(ld, dtype=float))
    eig, vec = np.linalg.eigh(ld)
    lowest = float(eig.min())
    if lowest >= 0.0:
        return ld
    if lowest < -LD_REPAIR_LIMIT:
        raise LdNotPsd(
            f"{name} has eigenvalue {lowest:.3e}, beyond the repairable limit "
            f"{-LD_REPAIR_LIMIT:g}"
        )
    clipped = vec @ np.diag(np.clip(eig, 0.0, None)) @ vec.T
    diag = np.sqrt(np.diag(clipped))
    if np.any(diag <= 0):
        raise LdNotPsd(f"{name} has a zero diagonal entry after clipping")
    out = clipped / np.outer(diag, diag)
    np.fill_diagonal(out, 1.0)
    return symmetrize(out)


def reconstruct_moments(inputs: SummaryInputs) -> SampleMoments:
    """Rebuild cross-moments from summaries, LD and instrument scales.

    The marginal-to-joint identity for centered variables gives
    ``S_zx_a[j] = gamma_marginal[j] * Var(z_j)`` and analogously for the
    outcome side, while ``S_zz = diag(scale) @ ld @ diag(scale)``.  The
    conditional residual variances are set to the marginal variances — the
    conservative bound — so every variance downstream is an upper bound.
    """
    ld_a = repair_ld(inputs.ld_a, name="ld_a")
    ld_b = repair_ld(inputs.ld_b, name="ld_b")
    s_zz_a = inputs.scale_z_a[:, None] * ld_a * inputs.scale_z_a[None, :]
    s_zz_b = inputs.scale_z_b[:, None] * ld_b * inputs.scale_z_b[None, :]
    return SampleMoments(
        s_zz_a=s_zz_a,
        s_zx_a=inputs.gamma_marginal * inputs.scale_z_a**2,
        s_zz_b=s_zz_b,
        s_zy_b=inputs.Gamma_marginal * inputs.scale_z_b**2,
        n_a=inputs.n_a,
        n_b=inputs.n_b,
        var_x_given_z_a=inputs.var_x_total_a,
        var_y_given_z_b=inputs.var_y_total_b,
        var_x_a=inputs.var_x_total_a,
        var_y_b=inputs.var_y_total_b,
        centered=True,
    )


def conservative_estimate(
    inputs: SummaryInputs, weight: WeightSpec | None = None
) -> TsivEstimate:
    """Estimate from summaries; every reported SE is a conservative upper bound.

    The bound enters through the moment covariance on both the pilot and the
    final step of the optimal-weight route.
    """
    est = estimate(reconstruct_moments(inputs), weight)
    return flag_conservative(est)


def summarize_moments(moments: SampleMoments) -> SummaryInputs:
    """Export exact marginal summaries from individual-level moments.

    The inverse of :func:`reconstruct_moments` up to floating point: feeding
    the result back reproduces the cross-moments exactly, which is the
    round-trip identity the tests pin down.  Marginal standard errors use the
    usual single-regressor formula with an n - 2 denominator.
    """
    var_z_a = np.diag(moments.s_zz_a).copy()
    var_z_b = np.diag(moments.s_zz_b).copy()
    if np.any(var_z_a <= 0) or np.any(var_z_b <= 0):
        raise ValueError("every instrument needs positive variance to be summarized")
    scale_a = np.sqrt(var_z_a)
    scale_b = np.sqrt(var_z_b)
    gamma_marginal = moments.s_zx_a / var_z_a
    Gamma_marginal = moments.s_zy_b / var_z_b

    def _marginal_se(total_var, coef, var_z, n):
        rss_over_n = np.clip(total_var - coef**2 * var_z, 0.0, None)
        sigma2 = rss_over_n * n / max(n - 2, 1)
        return np.sqrt(np.maximum(sigma2 / (n * var_z), np.finfo(float).tiny))

    return SummaryInputs(
        gamma_marginal=gamma_marginal,
        Gamma_marginal=Gamma_marginal,
        se_gamma=_marginal_se(moments.var_x_a, gamma_marginal, var_z_a, moments.n_a),
        se_Gamma=_marginal_se(moments.var_y_b, Gamma_marginal, var_z_b, moments.n_b),
        ld_a=moments.s_zz_a / np.outer(scale_a, scale_a),
        ld_b=moments.s_zz_b / np.outer(scale_b, scale_b),
        scale_z_a=scale_a,
        scale_z_b=scale_b,
        var_x_total_a=moments.var_x_a,
        var_y_total_b=moments.var_y_b,
        n_a=moments.n_a,
        n_b=moments.n_b,
    )
