"""Two-type branching-process model of epidemic contamination.

Contaminated individuals are unobserved; each day they leave, get
registered, or contaminate others.  Only the daily registered counts are
observed.  The package provides the generating-function machinery of the
model, seeded Monte Carlo simulation, estimators of the daily reproduction
mean from registered counts, forecasts of the unregistered population and
a command-line interface.
"""

__version__ = "0.1.0"

from .estimate import (
    BacktestRow,
    CaseSeries,
    EstimateReport,
    Forecast,
    MeanEstimate,
    alpha,
    backtest,
    build_report,
    ci_backtest,
    ci_mean,
    crump_hove,
    estimate,
    estimator_path,
    forecast_unregistered,
    harris,
    lotka_nagaev,
)
from .estimators import BranchingProcessModel, ReproductionMeanEstimator, check_counts
from .exceptions import (
    CalibrationError,
    CovbranchError,
    ExplosionError,
    InsufficientDataError,
    ParseError,
    TruncationError,
    UndefinedEstimateError,
    ValidationError,
)
from .ingest import cumulative_from_daily, daily_from_cumulative, parse_csv, validate
from .model import (
    Criticality,
    InitialPopulation,
    OffspringLaw,
    calibrate,
    classify,
    exact_distribution,
    mean_offspring,
    pgf_iterate,
    pgf_joint,
    pgf_marginal_t1,
    pgf_marginal_t2,
    process_pgf,
    theoretical_means,
)
from .simulate import EnsembleSummary, ModelConfig, Trajectory, monte_carlo, simulate_trajectory, step

__all__ = [
    "BacktestRow", "BranchingProcessModel", "CalibrationError", "CaseSeries", "CovbranchError",
    "Criticality", "EnsembleSummary", "EstimateReport", "ExplosionError", "Forecast",
    "InitialPopulation", "InsufficientDataError", "MeanEstimate", "ModelConfig", "OffspringLaw",
    "ParseError", "ReproductionMeanEstimator", "Trajectory", "TruncationError",
    "UndefinedEstimateError", "ValidationError", "alpha", "backtest", "build_report", "calibrate",
    "check_counts", "ci_backtest", "ci_mean", "classify", "crump_hove", "cumulative_from_daily",
    "daily_from_cumulative", "estimate", "estimator_path", "exact_distribution",
    "forecast_unregistered", "harris", "lotka_nagaev", "mean_offspring", "monte_carlo", "parse_csv",
    "pgf_iterate", "pgf_joint", "pgf_marginal_t1", "pgf_marginal_t2", "process_pgf",
    "simulate_trajectory", "step", "theoretical_means", "validate",
]
