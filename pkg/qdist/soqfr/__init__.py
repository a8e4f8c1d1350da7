"""Scalar-on-quantile-function regression and its relatives."""

from .models import (
    BinSpec,
    FgamModel,
    FittedModel,
    FunctionalCoefficient,
    GamLModel,
    HistogramModel,
    HistogramPredictor,
    MeanGlmModel,
    MODEL_NAMES,
    SoqfrLModel,
    SoqfrModel,
    STEP_VELOCITY_BINS,
    SurfaceCoefficient,
    fit_fgam_qf,
    fit_gam_lmoments,
    fit_histogram_glm,
    fit_soqfr,
    fit_soqfr_l,
    make_model,
    resolve_family,
)

__all__ = [
    # Recipes
    "SoqfrModel",
    "FgamModel",
    "SoqfrLModel",
    "GamLModel",
    "HistogramModel",
    "MeanGlmModel",
    "FittedModel",
    "make_model",
    "MODEL_NAMES",
    "resolve_family",
    # Results
    "FunctionalCoefficient",
    "SurfaceCoefficient",
    "HistogramPredictor",
    "BinSpec",
    "STEP_VELOCITY_BINS",
    # Operations
    "fit_soqfr",
    "fit_fgam_qf",
    "fit_soqfr_l",
    "fit_gam_lmoments",
    "fit_histogram_glm",
]
