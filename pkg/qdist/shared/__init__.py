"""Shared analysis infrastructure."""

from .errors import (
    ClampingWarning,
    ConvergenceError,
    ConvergenceWarning,
    DegenerateColumnWarning,
    NumericalError,
    QdistError,
    QdistWarning,
    SeparationError,
    SmoothingWarning,
    ValidationError,
)
from .quantiles import (
    QuantileFunction,
    QuantileGrid,
    estimate_quantile_function,
    estimate_quantile_functions,
    group_barycenters,
    group_mean_quantile,
    integrate_on_grid,
    quantile_matrix,
    robust_standardize,
    wasserstein2_distance,
)
from .datasets import (
    RepeatedMeasuresDataset,
    SubjectRecord,
    load_dataset,
    write_dataset,
)
from .lmoments import (
    LMomentVector,
    PveProfile,
    central_moments,
    legendre_shifted,
    lmoment_matrix,
    lmoment_ratios,
    lmoment_table,
    lmoments_from_quantile,
    lmoments_sample,
    pve,
    reconstruct_quantile,
    regular_moments_from_quantile,
    select_order_by_pve,
)
from .splines import (
    PenaltyMatrix,
    SplineBasis,
    build_basis,
    difference_penalty,
    kronecker_penalty,
    second_derivative_penalty,
    tensor_design_row,
)
from .pglm import (
    ModelSpec,
    PenalizedBlock,
    PenalizedFit,
    deviance_explained,
    fit_pirls,
    pointwise_ci,
    select_lambda_gcv,
)
from .metrics import MetricReport, auc, compare_reports, cv_r2, deviance_report
from .runner import (
    CvPlan,
    compare_models,
    cross_validate,
    cross_validate_async,
    make_folds,
    permutation_baseline,
)

__all__ = [
    # Errors
    "QdistError",
    "ValidationError",
    "NumericalError",
    "ConvergenceError",
    "SeparationError",
    "QdistWarning",
    "ClampingWarning",
    "SmoothingWarning",
    "ConvergenceWarning",
    "DegenerateColumnWarning",
    # Quantiles
    "QuantileGrid",
    "QuantileFunction",
    "estimate_quantile_function",
    "estimate_quantile_functions",
    "integrate_on_grid",
    "group_mean_quantile",
    "group_barycenters",
    "wasserstein2_distance",
    "robust_standardize",
    "quantile_matrix",
    # Datasets
    "SubjectRecord",
    "RepeatedMeasuresDataset",
    "load_dataset",
    "write_dataset",
    # L-moments
    "LMomentVector",
    "PveProfile",
    "legendre_shifted",
    "lmoments_from_quantile",
    "lmoments_sample",
    "reconstruct_quantile",
    "pve",
    "regular_moments_from_quantile",
    "central_moments",
    "lmoment_ratios",
    "select_order_by_pve",
    "lmoment_matrix",
    "lmoment_table",
    # Splines
    "SplineBasis",
    "PenaltyMatrix",
    "build_basis",
    "second_derivative_penalty",
    "difference_penalty",
    "tensor_design_row",
    "kronecker_penalty",
    # Penalized GLM
    "ModelSpec",
    "PenalizedBlock",
    "PenalizedFit",
    "fit_pirls",
    "select_lambda_gcv",
    "pointwise_ci",
    "deviance_explained",
    # Evaluation
    "MetricReport",
    "auc",
    "cv_r2",
    "compare_reports",
    "deviance_report",
    "CvPlan",
    "make_folds",
    "cross_validate",
    "cross_validate_async",
    "permutation_baseline",
    "compare_models",
]
