from .kernels import BACKEND
from .linear import (
    FitDiagnostics,
    FitError,
    LinearModel,
    NONZERO_TOL,
    decision_scores,
    fit_linear_svc,
    fit_logistic,
    hinge_lambda_bound,
    load_model,
    logistic_gradient,
    logistic_lambda_max,
    penalized_objective,
    predict,
    save_model,
    soft_threshold,
    strength_for_lambda,
    wald_pvalues,
)
from .reference import KNNModel, fit_knn, fit_lda, fit_ridge

__all__ = [
    "BACKEND", "FitDiagnostics", "FitError", "KNNModel", "LinearModel", "NONZERO_TOL",
    "decision_scores", "fit_knn", "fit_lda", "fit_linear_svc", "fit_logistic", "fit_ridge",
    "hinge_lambda_bound", "load_model", "logistic_gradient", "logistic_lambda_max",
    "penalized_objective", "predict", "save_model", "soft_threshold", "strength_for_lambda",
    "wald_pvalues",
]
