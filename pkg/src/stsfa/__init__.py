"""Spatio-temporal stochastic frontier estimation.

Normal/half-normal frontier models for panel data in which inefficiency is
spatially autocorrelated and may decay over time.
"""

__version__ = "0.1.0"

from ._backend import BACKEND
from .estimator import FitOptions, FitResult, ModelSpec, aic, efficiency_scores, fit, initialize
from .frontier import (
    ParamVector, PosteriorMoments, VarianceParams, decay_profile, loglik_time_invariant,
    loglik_time_varying, posterior_moments_ti, posterior_moments_tv, residuals,
    std_normal_log_cdf_complement, technical_efficiency_ti, technical_efficiency_tv,
)
from .panel import BalanceReport, PanelDataset, PanelSchema, design_matrix, load_panel_csv, validate_balance
from .weights import (
    SpatialWeights, delta, group_contiguity_weights, knn_weights, row_standardize, spatial_inverse_apply,
)

__all__ = [
    "BACKEND", "BalanceReport", "FitOptions", "FitResult", "ModelSpec", "PanelDataset", "PanelSchema",
    "ParamVector", "PosteriorMoments", "SpatialWeights", "VarianceParams", "aic", "decay_profile", "delta",
    "design_matrix", "efficiency_scores", "fit", "group_contiguity_weights", "initialize", "knn_weights",
    "load_panel_csv", "loglik_time_invariant", "loglik_time_varying", "posterior_moments_ti",
    "posterior_moments_tv", "residuals", "row_standardize", "spatial_inverse_apply",
    "std_normal_log_cdf_complement", "technical_efficiency_ti", "technical_efficiency_tv", "validate_balance",
]
