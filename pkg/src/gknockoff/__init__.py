"""Structural-change detection in linear models with knockoff FDR control."""

from .baselines import by_procedure, by_threshold, contrast_pvalues, permutation_filter
from .estimators import GKnockoffFilter, GKnockoffRegressor
from .exceptions import (
    AllDegenerateError,
    ConvergenceWarning,
    DimensionTooSmallError,
    GKnockoffError,
    GramCheckError,
    InvalidInputError,
    NonFiniteError,
    NotPDError,
    NotPSDError,
    OutOfRangeError,
    RankDeficientError,
    RoutingError,
    ZeroVarianceWarning,
)
from .fusis import FusedScreener, ScreenConfig, ScreenResult, select_bandwidth
from .knockoffs import knockoff_plus_threshold, knockoff_threshold
from .pipeline import DetectReport, DetectRequest, detect
from .simulation import DGPConfig, run_comparison, run_study, sweep
from .structural import TransformSpec, refit, spec_for, transform

__version__ = "0.1.0"

__all__ = [
    "AllDegenerateError", "ConvergenceWarning", "DGPConfig", "DetectReport",
    "DetectRequest", "DimensionTooSmallError", "FusedScreener", "GKnockoffError",
    "GKnockoffFilter", "GKnockoffRegressor", "GramCheckError", "InvalidInputError",
    "NonFiniteError", "NotPDError", "NotPSDError", "OutOfRangeError",
    "RankDeficientError", "RoutingError", "ScreenConfig", "ScreenResult",
    "TransformSpec", "ZeroVarianceWarning", "by_procedure", "by_threshold",
    "contrast_pvalues", "detect", "knockoff_plus_threshold", "knockoff_threshold",
    "permutation_filter", "refit", "run_comparison", "run_study", "select_bandwidth",
    "spec_for", "sweep", "transform",
]
