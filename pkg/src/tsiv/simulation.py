"""Data-generating processes and the replication harness for bias/coverage studies.

Three designs stress the estimators in turn: a linear instrument-exposure
equation (the asymptotics should hold), an interaction-contaminated exposure
equation (projection mismatch bites when the instrument laws differ), and a
threshold exposure with per-sample noise scales (noise heterogeneity bites
even with identical instrument laws).  A fourth scenario reproduces the
univariate projection sign-flip demonstration.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .estimators import WeightSpec, estimate
from .exceptions import TsivError
from .moments import NoiseParams, StructuralParams, TwoSampleData, compute_moments
from .projection import ProjectionReport, conspiracy_report

__all__ = [
    "SCENARIOS",
    "SimulationConfig",
    "SimulatedDraw",
    "EstimatorSummary",
    "SimulationReport",
    "generate",
    "run_study",
    "EstimandDemo",
    "heterogeneous_estimand_demo",
    "conspiracy_study",
    "paper_grid",
]

SCENARIOS = ("sim1", "sim2", "sim3", "conspiracy")

ESTIMATOR_NAMES = ("tstsls", "optimal")

# Instrument-exposure slope shared by all binary-instrument scenarios.
_GAMMA_COEF = 0.2

# Interaction coefficient of the misspecified exposure equation.
_INTERACTION_COEF = 0.02

_CONSPIRACY_MEAN_A = -1.0
_CONSPIRACY_MEAN_B = 1.0

# Abort a study when more than this fraction of replications fails.
MAX_FAILURE_RATE = 0.01


def _default_noise(scenario: str, sample: str) -> NoiseParams:
    if scenario == "sim3":
        var_v = 1.0 if sample == "a" else 2.0
        return NoiseParams(var_v=var_v, var_u=1.0, cov_uv=0.5 * np.sqrt(var_v))
    return NoiseParams(var_v=1.0, var_u=1.0, cov_uv=0.5)


@dataclass(frozen=True)
class SimulationConfig:
    """One scenario cell: design, sizes, noise, replication count and seed."""

    scenario: str
    beta: float = 1.0
    rho_a: float = 0.5
    rho_b: float = 0.5
    n_a: int = 1000
    n_b: int = 1000
    q: int = 10
    noise_a: NoiseParams | None = None
    noise_b: NoiseParams | None = None
    replications: int = 2000
    seed: int = 0
    beta_a: float | None = None

    def __post_init__(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if not (abs(self.rho_a) < 1 and abs(self.rho_b) < 1):
            raise ValueError("autoregressive parameters must lie strictly inside (-1, 1)")
        for name in ("n_a", "n_b", "q", "replications"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
            object.__setattr__(self, name, int(getattr(self, name)))
        if self.scenario == "conspiracy" and self.q != 1:
            raise ValueError("the conspiracy scenario is univariate; set q = 1")
        if self.noise_a is None:
            object.__setattr__(self, "noise_a", _default_noise(self.scenario, "a"))
        if self.noise_b is None:
            object.__setattr__(self, "noise_b", _default_noise(self.scenario, "b"))
        object.__setattr__(self, "seed", int(self.seed) % 2**64)

    def truth(self) -> StructuralParams:
        gamma = (
            np.array([1.0])
            if self.scenario == "conspiracy"
            else np.full(self.q, _GAMMA_COEF)
        )
        return StructuralParams(
            beta=self.beta,
            gamma=gamma,
            noise_a=self.noise_a,
            noise_b=self.noise_b,
            beta_a=self.beta_a,
        )

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "beta": float(self.beta),
            "rho_a": float(self.rho_a),
            "rho_b": float(self.rho_b),
            "n_a": self.n_a,
            "n_b": self.n_b,
            "q": self.q,
            "noise_a": vars(self.noise_a).copy(),
            "noise_b": vars(self.noise_b).copy(),
            "replications": self.replications,
            "seed": self.seed,
            "beta_a": self.beta_a,
        }


@dataclass(frozen=True)
class SimulatedDraw:
    """Observable two-sample data plus the hidden variables kept for oracles."""

    data: TwoSampleData
    x_b: np.ndarray
    y_a: np.ndarray


def _rng_for(seed: int, replicate_index: int) -> np.random.Generator:
    # Counter-based streams: one Philox keyed per (seed, replicate) pair, so
    # serial and parallel execution consume identical randomness.
    key = np.array([seed % 2**64, replicate_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _ar1_cholesky(rho: float, q: int) -> np.ndarray:
    idx = np.arange(q)
    sigma = rho ** np.abs(idx[:, None] - idx[None, :])
    return np.linalg.cholesky(sigma)


def _draw_instruments(rng: np.random.Generator, n: int, q: int, rho: float) -> np.ndarray:
    chol = _ar1_cholesky(rho, q)
    latent = 1.0 + rng.standard_normal((n, q)) @ chol.T
    return np.where(latent >= 0.0, 1.0, -1.0)


def _draw_noise(rng: np.random.Generator, n: int, noise: NoiseParams):
    # Closed-form 2x2 Cholesky keeps the draw well defined on the PSD boundary.
    l11 = np.sqrt(noise.var_v)
    l21 = noise.cov_uv / l11
    l22 = np.sqrt(max(0.0, noise.var_u - l21**2))
    raw = rng.standard_normal((n, 2))
    v = l11 * raw[:, 0]
    u = l21 * raw[:, 0] + l22 * raw[:, 1]
    return v, u


def _exposure(scenario: str, z: np.ndarray, v: np.ndarray) -> np.ndarray:
    s = z.sum(axis=1)
    if scenario == "sim1":
        return _GAMMA_COEF * s + v
    if scenario == "sim2":
        # Sum over unordered instrument pairs {j, k}, j != k.
        interactions = (s**2 - (z**2).sum(axis=1)) / 2.0
        return _GAMMA_COEF * s + _INTERACTION_COEF * interactions + v
    return (_GAMMA_COEF * s + v > 0.0).astype(float)


def generate(config: SimulationConfig, replicate_index: int = 0) -> SimulatedDraw:
    """Deterministic draw for one replication of the configured scenario.

    The hidden sample-b exposure and sample-a outcome are returned alongside
    the observable data for oracle checks; the estimators never see them.
    """
    rng = _rng_for(config.seed, replicate_index)
    beta_a = config.beta if config.beta_a is None else config.beta_a
    if config.scenario == "conspiracy":
        z_a = rng.normal(_CONSPIRACY_MEAN_A, 1.0, size=(config.n_a, 1))
        v_a, u_a = _draw_noise(rng, config.n_a, config.noise_a)
        x_a = z_a[:, 0] ** 2 + z_a[:, 0] + v_a
        y_a = beta_a * x_a + u_a
        z_b = rng.normal(_CONSPIRACY_MEAN_B, 1.0, size=(config.n_b, 1))
        v_b, u_b = _draw_noise(rng, config.n_b, config.noise_b)
        x_b = z_b[:, 0] ** 2 + z_b[:, 0] + v_b
        y_b = config.beta * x_b + u_b
    else:
        z_a = _draw_instruments(rng, config.n_a, config.q, config.rho_a)
        v_a, u_a = _draw_noise(rng, config.n_a, config.noise_a)
        x_a = _exposure(config.scenario, z_a, v_a)
        y_a = beta_a * x_a + u_a
        z_b = _draw_instruments(rng, config.n_b, config.q, config.rho_b)
        v_b, u_b = _draw_noise(rng, config.n_b, config.noise_b)
        x_b = _exposure(config.scenario, z_b, v_b)
        y_b = config.beta * x_b + u_b
    data = TwoSampleData(z_a=z_a, x_a=x_a, z_b=z_b, y_b=y_b)
    return SimulatedDraw(data=data, x_b=x_b, y_a=y_a)


def _replication_worker(task: tuple[SimulationConfig, int]) -> tuple[float, float, float, float]:
    """One replication: center, estimate under both weights, return (beta, se) pairs."""
    config, rep = task
    draw = generate(config, rep)
    try:
        moments = compute_moments(draw.data, center=True)
    except TsivError:
        return (np.nan, np.nan, np.nan, np.nan)
    out = []
    for spec in (WeightSpec.tstsls(), WeightSpec.optimal()):
        try:
            est = estimate(moments, spec)
            out.extend((est.beta_hat, est.se_sandwich))
        except TsivError:
            out.extend((np.nan, np.nan))
    return tuple(out)


def _resolve_jobs(n_jobs: int | None) -> int:
    if n_jobs is None:
        raw = os.environ.get("TSIV_THREADS", "").strip()
        n_jobs = int(raw) if raw else 1
    return max(1, int(n_jobs))


@dataclass(frozen=True)
class EstimatorSummary:
    """Aggregates for one estimator over the surviving replications."""

    estimator: str
    bias: float
    sd: float
    mean_se: float
    coverage: float
    bias_mc_se: float
    coverage_mc_se: float
    n_used: int
    n_failed: int

    def to_dict(self) -> dict:
        return {
            "estimator": self.estimator,
            "bias": self.bias,
            "sd": self.sd,
            "mean_se": self.mean_se,
            "coverage": self.coverage,
            "bias_mc_se": self.bias_mc_se,
            "coverage_mc_se": self.coverage_mc_se,
            "n_used": self.n_used,
            "n_failed": self.n_failed,
        }


_CSV_COLUMNS = (
    "scenario",
    "estimator",
    "beta",
    "rho_a",
    "rho_b",
    "n_a",
    "n_b",
    "q",
    "replications",
    "seed",
    "bias",
    "sd",
    "mean_se",
    "coverage",
    "bias_mc_se",
    "coverage_mc_se",
    "n_failed",
)


@dataclass(frozen=True)
class SimulationReport:
    """Study results for one scenario cell, both estimators side by side."""

    config: SimulationConfig
    estimators: tuple[EstimatorSummary, ...]
    estimates: dict | None = field(default=None, compare=False)

    CSV_COLUMNS = _CSV_COLUMNS

    def summary(self, name: str) -> EstimatorSummary:
        for summary in self.estimators:
            if summary.estimator == name:
                return summary
        raise KeyError(name)

    def to_rows(self) -> list[dict]:
        rows = []
        for summary in self.estimators:
            row = {
                "scenario": self.config.scenario,
                "estimator": summary.estimator,
                "beta": self.config.beta,
                "rho_a": self.config.rho_a,
                "rho_b": self.config.rho_b,
                "n_a": self.config.n_a,
                "n_b": self.config.n_b,
                "q": self.config.q,
                "replications": self.config.replications,
                "seed": self.config.seed,
                "bias": summary.bias,
                "sd": summary.sd,
                "mean_se": summary.mean_se,
                "coverage": summary.coverage,
                "bias_mc_se": summary.bias_mc_se,
                "coverage_mc_se": summary.coverage_mc_se,
                "n_failed": summary.n_failed,
            }
            rows.append(row)
        return rows

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "estimators": [summary.to_dict() for summary in self.estimators],
        }


def _summarize(name: str, beta: np.ndarray, se: np.ndarray, true_beta: float) -> EstimatorSummary:
    ok = np.isfinite(beta) & np.isfinite(se)
    used = beta[ok]
    used_se = se[ok]
    n_used = int(ok.sum())
    if n_used < 2:
        raise RuntimeError(f"estimator {name!r} produced fewer than 2 usable replications")
    hits = np.abs(used - true_beta) <= 1.96 * used_se
    sd = float(used.std(ddof=1))
    coverage = float(hits.mean())
    return EstimatorSummary(
        estimator=name,
        bias=float(used.mean() - true_beta),
        sd=sd,
        mean_se=float(used_se.mean()),
        coverage=coverage,
        bias_mc_se=sd / np.sqrt(n_used),
        coverage_mc_se=float(np.sqrt(coverage * (1.0 - coverage) / n_used)),
        n_used=n_used,
        n_failed=int(beta.shape[0] - n_used),
    )


def _map_replications(config: SimulationConfig, n_jobs: int | None) -> np.ndarray:
    jobs = _resolve_jobs(n_jobs)
    tasks = [(config, rep) for rep in range(config.replications)]
    if jobs == 1:
        rows = [_replication_worker(task) for task in tasks]
    else:
        chunksize = max(1, config.replications // (jobs * 8))
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_replication_worker, tasks, chunksize=chunksize))
    # Results are collected in replicate order, so aggregation below is
    # independent of scheduling and thread count.
    return np.array(rows, dtype=float)


def run_study(
    config: SimulationConfig,
    n_jobs: int | None = None,
    keep_estimates: bool = False,
) -> SimulationReport:
    """Run the replication study for one scenario cell.

    Parameters
    ----------
    config : SimulationConfig
        Scenario cell; ``replications`` must be at least 2.
    n_jobs : int, optional
        Worker processes; defaults to the TSIV_THREADS environment variable
        (else serial).  Results are bitwise identical across worker counts.
    keep_estimates : bool, default False
        Attach the per-replication estimate arrays to the report.

    Raises
    ------
    RuntimeError
        When more than MAX_FAILURE_RATE of replications fails for either
        estimator.
    """
    if config.replications < 2:
        raise ValueError("a study needs at least 2 replications")
    if config.scenario == "conspiracy":
        raise ValueError("the conspiracy scenario has no coverage study; use conspiracy_study")
    results = _map_replications(config, n_jobs)
    columns = {
        "tstsls": (results[:, 0], results[:, 1]),
        "optimal": (results[:, 2], results[:, 3]),
    }
    for name, (beta, se) in columns.items():
        failures = int((~(np.isfinite(beta) & np.isfinite(se))).sum())
        if failures > MAX_FAILURE_RATE * config.replications:
            raise RuntimeError(
                f"estimator {name!r} failed on {failures} of {config.replications} "
                f"replications (more than {MAX_FAILURE_RATE:.0%})"
            )
    summaries = tuple(
        _summarize(name, beta, se, config.beta) for name, (beta, se) in columns.items()
    )
    estimates = None
    if keep_estimates:
        estimates = {
            name: {"beta_hat": beta, "se": se} for name, (beta, se) in columns.items()
        }
    return SimulationReport(config=config, estimators=summaries, estimates=estimates)


@dataclass(frozen=True)
class EstimandDemo:
    """Evidence that the estimators target the sample-b slope, not sample a's."""

    mean_estimate: float
    mc_se: float
    beta_b: float
    beta_a: float
    n_used: int

    def gap_in_mc_ses(self) -> float:
        return abs(self.mean_estimate - self.beta_b) / self.mc_se

    def to_dict(self) -> dict:
        return {
            "mean_estimate": self.mean_estimate,
            "mc_se": self.mc_se,
            "beta_b": self.beta_b,
            "beta_a": self.beta_a,
            "gap_in_mc_ses": self.gap_in_mc_ses(),
            "n_used": self.n_used,
        }


def heterogeneous_estimand_demo(config: SimulationConfig, n_jobs: int | None = None) -> EstimandDemo:
    """Run the study with distinct outcome slopes per sample.

    The hidden sample-a outcome uses ``config.beta_a`` while sample b keeps
    ``config.beta``; the estimates must concentrate on the latter.
    """
    if config.beta_a is None:
        raise ValueError("set beta_a on the config to make the slopes differ")
    results = _map_replications(config, n_jobs)
    beta = results[:, 0]
    ok = np.isfinite(beta)
    used = beta[ok]
    if used.shape[0] < 2:
        raise RuntimeError("too few usable replications")
    return EstimandDemo(
        mean_estimate=float(used.mean()),
        mc_se=float(used.std(ddof=1) / np.sqrt(used.shape[0])),
        beta_b=float(config.beta),
        beta_a=float(config.beta_a),
        n_used=int(used.shape[0]),
    )


def conspiracy_study(config: SimulationConfig, caliper: float = 0.1) -> ProjectionReport:
    """Generate the univariate projection-mismatch design and report the gap."""
    if config.scenario != "conspiracy":
        raise ValueError("conspiracy_study requires the conspiracy scenario")
    draw = generate(config, 0)
    return conspiracy_report(
        draw.data.z_a, draw.data.x_a, draw.data.z_b, draw.x_b, caliper=caliper
    )


def paper_grid(table: int, replications: int = 2000, seed: int = 0) -> list[SimulationConfig]:
    """Scenario grids matching the three published study tables."""
    configs: list[SimulationConfig] = []
    sizes = ((1000, 1000), (1000, 5000), (5000, 1000), (5000, 5000))
    if table == 1:
        for beta in (1.0, 10.0):
            for rho_b in (0.5, 0.0, -0.5):
                for n_a, n_b in sizes:
                    configs.append(
                        SimulationConfig(
                            scenario="sim1", beta=beta, rho_a=0.5, rho_b=rho_b,
                            n_a=n_a, n_b=n_b, replications=replications,
                            seed=seed + len(configs),
                        )
                    )
    elif table == 2:
        for rho_b in (0.5, 0.0, -0.5):
            for n_a, n_b in sizes:
                configs.append(
                    SimulationConfig(
                        scenario="sim2", beta=1.0, rho_a=0.5, rho_b=rho_b,
                        n_a=n_a, n_b=n_b, replications=replications,
                        seed=seed + len(configs),
                    )
                )
    elif table == 3:
        for n_a in (1000, 5000, 20000):
            for n_b in (1000, 5000, 20000):
                configs.append(
                    SimulationConfig(
                        scenario="sim3", beta=1.0, rho_a=0.5, rho_b=0.5,
                        n_a=n_a, n_b=n_b, replications=replications,
                        seed=seed + len(configs),
                    )
                )
    else:
        raise ValueError("table must be 1, 2 or 3")
    return configs
