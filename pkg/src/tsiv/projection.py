"""Best-linear-projection diagnostics and instrument-distribution matching.

When the instrument-exposure relation is nonlinear, the best linear
approximation of it depends on the instrument distribution, so two samples
with different instrument laws can disagree arbitrarily — even in sign — about
the first-stage slope while sharing the same structural relation.  Matching
the two instrument samples onto their common support pulls the two
projections back together.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .exceptions import DegenerateMoments, NoMatches
from .moments import _freeze

__all__ = [
    "LinearProjection",
    "best_linear_projection",
    "MatchResult",
    "match_samples",
    "ProjectionReport",
    "conspiracy_report",
]


@dataclass(frozen=True)
class LinearProjection:
    """OLS slopes with the intercept recorded separately."""

    gamma: np.ndarray
    intercept: float

    def __post_init__(self) -> None:
        _freeze(self, gamma=np.array(self.gamma, dtype=float))


def _as_design(z, name: str) -> np.ndarray:
    arr = np.asarray(z, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 1-D or 2-D, got shape {arr.shape}")
    return arr


def best_linear_projection(z, x) -> LinearProjection:
    """Least-squares linear approximation of the exposure given the instruments.

    Fits with an intercept and returns the slope vector separately from it.
    """
    z = _as_design(z, "z")
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != z.shape[0]:
        raise ValueError("x must be a vector with one entry per row of z")
    design = np.column_stack([np.ones(z.shape[0]), z])
    coef, _, rank, _ = np.linalg.lstsq(design, x, rcond=None)
    if rank < design.shape[1]:
        raise DegenerateMoments("instrument design is rank deficient")
    return LinearProjection(gamma=coef[1:], intercept=float(coef[0]))


@dataclass(frozen=True)
class MatchResult:
    """Paired row indices into the two original instrument samples."""

    idx_a: np.ndarray
    idx_b: np.ndarray

    def __post_init__(self) -> None:
        idx_a = np.array(self.idx_a, dtype=np.intp)
        idx_b = np.array(self.idx_b, dtype=np.intp)
        if idx_a.shape != idx_b.shape:
            raise ValueError("paired index lists must have equal length")
        _freeze(self, idx_a=idx_a, idx_b=idx_b)

    @property
    def n_pairs(self) -> int:
        return self.idx_a.shape[0]


def match_samples(z_a, z_b, caliper: float) -> MatchResult:
    """Greedy nearest-neighbor matching without replacement across the samples.

    Distances are Euclidean after standardizing each instrument column by the
    pooled within-sample standard deviation, so for samples with unit-variance
    instruments the caliper reads on the raw scale.  The smaller sample is
    walked in index order; each point takes its nearest still-unmatched
    partner, and pairs farther apart than the caliper are dropped.  Ties are
    broken towards the lowest partner index.

    Raises
    ------
    NoMatches
        When no pair at all survives the caliper.
    """
    if not caliper > 0:
        raise ValueError("caliper must be positive")
    za = _as_design(z_a, "z_a")
    zb = _as_design(z_b, "z_b")
    if za.shape[1] != zb.shape[1]:
        raise ValueError("instrument dimension differs between samples")
    pooled_sd = np.sqrt((za.var(axis=0, ddof=1) + zb.var(axis=0, ddof=1)) / 2.0)
    pooled_sd[pooled_sd == 0.0] = 1.0
    sa = za / pooled_sd
    sb = zb / pooled_sd

    swap = za.shape[0] > zb.shape[0]
    small, big = (sb, sa) if swap else (sa, sb)
    n_small, n_big = small.shape[0], big.shape[0]
    used = np.zeros(n_big, dtype=bool)
    small_idx: list[int] = []
    big_idx: list[int] = []

    def _scan(dist: np.ndarray, orig: np.ndarray) -> tuple[int, bool]:
        """First unused candidate within the caliper; ties to the lowest index.

        Returns (partner, settled); settled=False means every scanned
        candidate was within the caliper but already taken, so a longer
        candidate list is needed.
        """
        beyond = ~np.isfinite(dist) | (dist > caliper)
        if beyond.any():
            cut = int(np.argmax(beyond))
            settled_when_empty = True
        else:
            cut = dist.shape[0]
            settled_when_empty = False
        if cut == 0:
            return -1, True
        dist, orig = dist[:cut], orig[:cut]
        free = ~used[orig]
        if not free.any():
            return -1, settled_when_empty
        first = int(np.argmax(free))
        ties = orig[(dist == dist[first]) & free]
        return int(ties.min()), True

    # One vectorized batch query covers the common case.  Whenever enough
    # partners have been consumed, the tree is rebuilt without them and the
    # batch rows of the unprocessed tail are refreshed, so individual
    # fallback queries stay rare and short.  Neither device changes which
    # partner is nearest-unused, so the greedy outcome is order-exact.
    alive = np.arange(n_big)
    tree = cKDTree(big)
    k0 = min(16, n_big)
    batch_dist, batch_idx = tree.query(small, k=k0)
    batch_dist = np.atleast_2d(batch_dist)
    batch_orig = np.atleast_2d(batch_idx)
    used_since_rebuild = 0
    for i in range(n_small):
        partner, settled = _scan(batch_dist[i], batch_orig[i])
        if partner < 0 and not settled:
            k = k0
            while True:
                k = min(4 * k, alive.shape[0])
                dist, idx = tree.query(small[i], k=k)
                orig = alive[np.atleast_1d(idx)]
                partner, settled = _scan(np.atleast_1d(dist), orig)
                if partner >= 0 or settled or k >= alive.shape[0]:
                    break
        if partner >= 0:
            used[partner] = True
            used_since_rebuild += 1
            small_idx.append(i)
            big_idx.append(partner)
            tail = n_small - (i + 1)
            if used_since_rebuild >= max(512, alive.shape[0] // 16) and tail > 0:
                alive = alive[~used[alive]]
                tree = cKDTree(big[alive])
                used_since_rebuild = 0
                k_tail = min(k0, alive.shape[0])
                dist, idx = tree.query(small[i + 1 :], k=k_tail)
                batch_dist = np.full((n_small, k_tail), np.inf)
                batch_orig = np.zeros((n_small, k_tail), dtype=np.intp)
                batch_dist[i + 1 :] = np.atleast_2d(dist.reshape(tail, k_tail))
                batch_orig[i + 1 :] = alive[np.atleast_2d(idx.reshape(tail, k_tail))]
    if not small_idx:
        raise NoMatches(f"no pair within caliper {caliper:g}")
    if swap:
        return MatchResult(idx_a=np.array(big_idx), idx_b=np.array(small_idx))
    return MatchResult(idx_a=np.array(small_idx), idx_b=np.array(big_idx))


def _relative_gap(g1: np.ndarray, g2: np.ndarray) -> float:
    scale = max(float(np.linalg.norm(g1)), float(np.linalg.norm(g2)))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(g1 - g2)) / scale


def _any_sign_flip(g1: np.ndarray, g2: np.ndarray) -> bool:
    return bool(np.any(g1 * g2 < 0.0))


@dataclass(frozen=True)
class ProjectionReport:
    """Per-sample projections before and after matching, with gap diagnostics."""

    gamma_a: np.ndarray
    gamma_b: np.ndarray
    divergence: float
    sign_flip: bool
    matched_gamma_a: np.ndarray
    matched_gamma_b: np.ndarray
    matched_divergence: float
    matched_sign_flip: bool
    kept_fraction: float
    n_a: int
    n_b: int
    n_matched: int

    def __post_init__(self) -> None:
        _freeze(
            self,
            gamma_a=np.array(self.gamma_a, dtype=float),
            gamma_b=np.array(self.gamma_b, dtype=float),
            matched_gamma_a=np.array(self.matched_gamma_a, dtype=float),
            matched_gamma_b=np.array(self.matched_gamma_b, dtype=float),
        )

    def to_dict(self) -> dict:
        return {
            "gamma_a": [float(v) for v in self.gamma_a],
            "gamma_b": [float(v) for v in self.gamma_b],
            "divergence": float(self.divergence),
            "sign_flip": bool(self.sign_flip),
            "matched_gamma_a": [float(v) for v in self.matched_gamma_a],
            "matched_gamma_b": [float(v) for v in self.matched_gamma_b],
            "matched_divergence": float(self.matched_divergence),
            "matched_sign_flip": bool(self.matched_sign_flip),
            "kept_fraction": float(self.kept_fraction),
            "n_a": int(self.n_a),
            "n_b": int(self.n_b),
            "n_matched": int(self.n_matched),
        }


def conspiracy_report(z_a, x_a, z_b, x_b, caliper: float = 0.1) -> ProjectionReport:
    """Quantify the projection gap between samples and its matched mitigation.

    Needs the exposure observed in both samples, which restricts the
    diagnostic to simulated or validation data.
    """
    za = _as_design(z_a, "z_a")
    zb = _as_design(z_b, "z_b")
    xa = np.asarray(x_a, dtype=float)
    xb = np.asarray(x_b, dtype=float)
    proj_a = best_linear_projection(za, xa)
    proj_b = best_linear_projection(zb, xb)
    matches = match_samples(za, zb, caliper)
    matched_a = best_linear_projection(za[matches.idx_a], xa[matches.idx_a])
    matched_b = best_linear_projection(zb[matches.idx_b], xb[matches.idx_b])
    return ProjectionReport(
        gamma_a=proj_a.gamma,
        gamma_b=proj_b.gamma,
        divergence=_relative_gap(proj_a.gamma, proj_b.gamma),
        sign_flip=_any_sign_flip(proj_a.gamma, proj_b.gamma),
        matched_gamma_a=matched_a.gamma,
        matched_gamma_b=matched_b.gamma,
        matched_divergence=_relative_gap(matched_a.gamma, matched_b.gamma),
        matched_sign_flip=_any_sign_flip(matched_a.gamma, matched_b.gamma),
        kept_fraction=matches.n_pairs / min(za.shape[0], zb.shape[0]),
        n_a=za.shape[0],
        n_b=zb.shape[0],
        n_matched=matches.n_pairs,
    )
