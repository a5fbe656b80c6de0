"""Functional factor model for electricity price-demand curves.

The package estimates daily price-demand curves from noisy hourly
observations (natural cubic smoothing splines with GCV and an
undersmoothing cross-validation), extracts a common functional basis by
FPCA on randomly varying demand domains, forecasts the factor score series
with seasonal ARIMA models, and evaluates day-ahead price forecasts against
classical time-series baselines in a rolling-origin study.

Modules
-------
ingest      CSV parsing, calendar rules, Dataset/DayRecord types
smoothing   per-day spline fitting, GCV, undersmoothing CV
fpca        covariance surface, eigenbasis, VARIMAX, scores
pipeline    end-to-end fit, dimension selection, subset-span validation
forecast    SARIMA score models, demand strategies, price forecasts
baselines   AR(1)-with-deterministics and 2-regime Markov-switch models
evaluate    rolling-origin study, RMSE/interval-score metrics, Granger test
simulate    synthetic generators with known ground truth
artifacts   deterministic JSON/CSV serialization
cli         command-line front end (``curvecast`` entry point)
"""

from .exceptions import (
    CurvecastError, ParseError, DomainError, RankError, BandwidthError,
    ConvergenceError, SchemaError,
)
from .ingest import (
    Dataset, DayRecord, HourlyObservation, load_dataset, load_holidays,
    split_learning_forecast, workday_calendar,
)
from .smoothing import (
    PriceDemandCurve, SmoothingReport, fit_spline, gcv_select, fit_day,
    curve_l2_norm,
)
from .fpca import (
    BasisSystem, CovarianceSurface, ScoreMatrix, ReconstructedCurve,
    make_grid, estimate_covariance_surface, classical_covariance_surface,
    eigendecompose, varimax_rotate, compute_scores, reconstruct_curve,
)
from .pipeline import (
    FitConfig, FittedModel, SelectionReport, SpanValidation, fit_curves,
    fit_ffm, select_dimension, undersmoothing_cv, validate_subset_span,
    subset_dataset,
)
from .forecast import (
    SarimaModel, ScoreForecast, ForecastResult, fit_sarima,
    select_sarima_order, forecast_scores, forecast_demand, forecast_prices,
    aggregate_peak_base,
)
from .baselines import (
    ArModel, MrModel, fit_ar, forecast_ar, fit_mr, forecast_mr,
    hamilton_filter,
)
from .evaluate import (
    StudyConfig, EvaluationReport, rolling_forecast_study, rmse,
    interval_score, trimmed_mean, granger_test, score_ratio_series,
    stationarity_hook,
)
from .simulate import (
    FfmGenerator, ScoreProcess, DomainProcess, DemandPath, GroundTruth,
    generate, generate_sarima, generate_regime_switch,
    make_orthonormal_factors,
)

__version__ = "0.1.0"

__all__ = [
    "CurvecastError", "ParseError", "DomainError", "RankError",
    "BandwidthError", "ConvergenceError", "SchemaError",
    "Dataset", "DayRecord", "HourlyObservation", "load_dataset",
    "load_holidays", "split_learning_forecast", "workday_calendar",
    "PriceDemandCurve", "SmoothingReport", "fit_spline", "gcv_select",
    "fit_day", "curve_l2_norm",
    "BasisSystem", "CovarianceSurface", "ScoreMatrix", "ReconstructedCurve",
    "make_grid", "estimate_covariance_surface",
    "classical_covariance_surface", "eigendecompose", "varimax_rotate",
    "compute_scores", "reconstruct_curve",
    "FitConfig", "FittedModel", "SelectionReport", "SpanValidation",
    "fit_curves", "fit_ffm", "select_dimension", "undersmoothing_cv",
    "validate_subset_span", "subset_dataset",
    "SarimaModel", "ScoreForecast", "ForecastResult", "fit_sarima",
    "select_sarima_order", "forecast_scores", "forecast_demand",
    "forecast_prices", "aggregate_peak_base",
    "ArModel", "MrModel", "fit_ar", "forecast_ar", "fit_mr", "forecast_mr",
    "hamilton_filter",
    "StudyConfig", "EvaluationReport", "rolling_forecast_study", "rmse",
    "interval_score", "trimmed_mean", "granger_test", "score_ratio_series",
    "stationarity_hook",
    "FfmGenerator", "ScoreProcess", "DomainProcess", "DemandPath",
    "GroundTruth", "generate", "generate_sarima", "generate_regime_switch",
    "make_orthonormal_factors",
    "__version__",
]
