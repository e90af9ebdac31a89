"""Two-sample instrumental-variable estimation for heterogeneous samples.

Point estimation by weighted moment matching with per-sample normalization,
four variance estimators, summary-statistics support with conservative
bounds, binary-instrument treatment-effect accounting, projection-mismatch
diagnostics, and a reproducible replication harness.
"""

from . import exceptions
from .estimators import (
    TsivEstimate,
    WeightSpec,
    estimate,
    estimate_omega,
    first_stage_f,
    moment_function,
    naive_tstsls_variance,
    sandwich_variance,
    tscov_estimate,
    wald_ratio,
)
from .late import (
    ComplierSpec,
    DiscreteIvWorld,
    cross_sample_wald,
    identification_audit,
    late_one_sample,
    late_two_sample,
    load_world_csv,
    simulate_from_worlds,
    write_world_csv,
)
from .moments import (
    NoiseParams,
    SampleMoments,
    StructuralParams,
    TwoSampleData,
    compute_moments,
    covariance_homogeneity_test,
)
from .projection import (
    ProjectionReport,
    best_linear_projection,
    conspiracy_report,
    match_samples,
)
from .simulation import (
    SimulationConfig,
    SimulationReport,
    conspiracy_study,
    generate,
    heterogeneous_estimand_demo,
    paper_grid,
    run_study,
)
from .summary_data import (
    SummaryInputs,
    conservative_estimate,
    reconstruct_moments,
    summarize_moments,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "exceptions",
    "TwoSampleData",
    "SampleMoments",
    "NoiseParams",
    "StructuralParams",
    "compute_moments",
    "covariance_homogeneity_test",
    "WeightSpec",
    "TsivEstimate",
    "estimate",
    "estimate_omega",
    "moment_function",
    "sandwich_variance",
    "naive_tstsls_variance",
    "first_stage_f",
    "tscov_estimate",
    "wald_ratio",
    "SummaryInputs",
    "reconstruct_moments",
    "conservative_estimate",
    "summarize_moments",
    "ComplierSpec",
    "DiscreteIvWorld",
    "late_one_sample",
    "late_two_sample",
    "cross_sample_wald",
    "identification_audit",
    "load_world_csv",
    "write_world_csv",
    "simulate_from_worlds",
    "best_linear_projection",
    "match_samples",
    "conspiracy_report",
    "ProjectionReport",
    "SimulationConfig",
    "SimulationReport",
    "generate",
    "run_study",
    "heterogeneous_estimand_demo",
    "conspiracy_study",
    "paper_grid",
]
