"""Multi-seasonal tensor factor models for high-dimensional time series forecasting."""

from __future__ import annotations

from .benchmarks import (
    BenchmarkForecast,
    ProviderMatrixSeries,
    fpca_forecast,
    mfm_forecast,
    split_providers,
    vfm_forecast,
)
from .evaluation import (
    EvalCell,
    EvalReport,
    RollingPlan,
    SimSpec,
    emit_report,
    load_report,
    make_benchmark_forecaster,
    make_tensor_forecaster,
    merge_reports,
    rolling_evaluate,
    simulate,
)
from .factor_model import (
    FactorSeries,
    LoadingSet,
    Ranks,
    TensorFactorModel,
    extract_factors,
    fit_factor_model,
    fitted_values,
    in_sample_mse,
    initial_loadings,
    load_model,
    projected_loadings,
    reconstruct_common,
    save_model,
    select_ranks,
)
from .forecast import (
    classical_decompose,
    fit_ar,
    fit_ar1,
    fit_ar_aic,
    forecast_ar,
    forecast_ar1,
    forecast_factors,
    forecast_observations,
    forecast_series,
)
from .panel import (
    CalendarSpec,
    PanelSeries,
    Standardization,
    TensorSeries,
    destandardize,
    estimate_standardization,
    fold,
    ingest_csv,
    load_tensor_series,
    save_tensor_series,
    standardize,
    unfold_panel,
)
from .tensor import mode_product, multi_mode_product, top_eigenvectors, unfold

__version__ = "0.1.0"

__all__ = [
    "BenchmarkForecast",
    "CalendarSpec",
    "EvalCell",
    "EvalReport",
    "FactorSeries",
    "LoadingSet",
    "PanelSeries",
    "ProviderMatrixSeries",
    "Ranks",
    "RollingPlan",
    "SimSpec",
    "Standardization",
    "TensorFactorModel",
    "TensorSeries",
    "classical_decompose",
    "destandardize",
    "emit_report",
    "estimate_standardization",
    "extract_factors",
    "fit_ar",
    "fit_ar1",
    "fit_ar_aic",
    "fit_factor_model",
    "fitted_values",
    "fold",
    "forecast_ar",
    "forecast_ar1",
    "forecast_factors",
    "forecast_observations",
    "forecast_series",
    "fpca_forecast",
    "in_sample_mse",
    "ingest_csv",
    "initial_loadings",
    "load_model",
    "load_report",
    "load_tensor_series",
    "make_benchmark_forecaster",
    "make_tensor_forecaster",
    "merge_reports",
    "mfm_forecast",
    "mode_product",
    "multi_mode_product",
    "projected_loadings",
    "reconstruct_common",
    "rolling_evaluate",
    "save_model",
    "save_tensor_series",
    "select_ranks",
    "simulate",
    "split_providers",
    "standardize",
    "top_eigenvectors",
    "unfold",
    "unfold_panel",
    "vfm_forecast",
    "__version__",
]
