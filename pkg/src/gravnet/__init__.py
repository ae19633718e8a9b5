"""Gravity-model estimation and network diagnostics for dyadic trade panels."""

__version__ = "0.1.0"

from .compare import (
    ComparisonReport,
    KsResult,
    ModelPrediction,
    analytical_var_avg_ns,
    build_comparison_report,
    ensemble_summary,
    ks_two_sample,
    report_as_dict,
)
from .errors import (
    ConvergenceError,
    DegenerateComparisonError,
    DependencyError,
    GravnetError,
    PredictionOverflowError,
    SchemaError,
    SeparationError,
    SingularDesignError,
    ValidationError,
)
from .estimation import (
    FitResult,
    VuongResult,
    ZipFitResult,
    fit_logit,
    fit_ols,
    fit_poisson_pml,
    fit_zip,
    vuong_test,
)
from .netstats import (
    STAT_KINDS,
    NodeStatVector,
    TradeNetwork,
    all_statistics,
    compute_statistic,
    density,
    reciprocal_degree,
)
from .panel import (
    DESIGN_COLUMNS,
    CrossSection,
    DesignMatrix,
    DyadPanel,
    SummaryStats,
    build_cross_section,
    build_design_matrix,
    load_panel,
    summary_stats,
)
from .prediction import (
    BinaryPrediction,
    LinkProbabilityMatrix,
    NetworkEnsemble,
    PredictedWeights,
    density_induced_binary,
    link_probabilities,
    predict_ols,
    predict_ppml,
    predict_zip,
    sample_bernoulli_ensemble,
    sample_weighted_ensemble,
    threshold_by_manhattan,
    threshold_matching_density,
    zero_flow_probability,
)
from .synth import SynthSpec, generate_year, write_synth_panel

__all__ = [
    "BinaryPrediction",
    "ComparisonReport",
    "ConvergenceError",
    "CrossSection",
    "DESIGN_COLUMNS",
    "DegenerateComparisonError",
    "DependencyError",
    "DesignMatrix",
    "DyadPanel",
    "FitResult",
    "GravnetError",
    "KsResult",
    "LinkProbabilityMatrix",
    "ModelPrediction",
    "NetworkEnsemble",
    "NodeStatVector",
    "PredictedWeights",
    "PredictionOverflowError",
    "STAT_KINDS",
    "SchemaError",
    "SeparationError",
    "SingularDesignError",
    "SummaryStats",
    "SynthSpec",
    "TradeNetwork",
    "ValidationError",
    "VuongResult",
    "ZipFitResult",
    "__version__",
    "all_statistics",
    "analytical_var_avg_ns",
    "build_comparison_report",
    "build_cross_section",
    "build_design_matrix",
    "compute_statistic",
    "density",
    "density_induced_binary",
    "ensemble_summary",
    "fit_logit",
    "fit_ols",
    "fit_poisson_pml",
    "fit_zip",
    "generate_year",
    "ks_two_sample",
    "link_probabilities",
    "load_panel",
    "predict_ols",
    "predict_ppml",
    "predict_zip",
    "reciprocal_degree",
    "report_as_dict",
    "sample_bernoulli_ensemble",
    "sample_weighted_ensemble",
    "summary_stats",
    "threshold_by_manhattan",
    "threshold_matching_density",
    "vuong_test",
    "write_synth_panel",
    "zero_flow_probability",
]
