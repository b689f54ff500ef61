"""Bayesian VAR, factor and benchmark forecasting of macroeconomic panels,
with an out-of-sample harness, forecast evaluation and time-series tokenizers."""

__version__ = "0.1.0"

from .data import TimeSeriesPanel, apply_transforms, load_panel, select_set, variable_set
from .bvar import ConjugateBVAR, ConjugateHyper
from .bvar_asym import AsymmetricBVAR, AsymmetricHyper
from .factor import FactorModel
from .benchmark import ar1_forecast
from .harness import ExperimentPlan, ForecastStore, run_experiment, ingest_external_forecasts
from .evaluation import build_report, diebold_mariano, rmsfe_ratio

__all__ = [
    "TimeSeriesPanel", "apply_transforms", "load_panel", "select_set", "variable_set",
    "ConjugateBVAR", "ConjugateHyper", "AsymmetricBVAR", "AsymmetricHyper", "FactorModel",
    "ar1_forecast", "ExperimentPlan", "ForecastStore", "run_experiment", "ingest_external_forecasts",
    "build_report", "diebold_mariano", "rmsfe_ratio",
]
