from .evaluate import (ALL_FEATURES, GAZE_FEATURES, PROFILE_FEATURES, SETTINGS, EvalReport,
                       FeatureMatrix, ablation, bootstrap_evaluate, build_feature_matrix,
                       format_ablation, impute_duration, normalize, prepare)
from .models import (DEFAULTS, KINDS, MLP, GradientBoosting, Lasso, LinearSVR, ModelSpec,
                     RandomForest, RegressionTree, SchemaError, fit, lasso_path_max,
                     mlp_loss_grad, predict)

__all__ = [
    "ALL_FEATURES", "GAZE_FEATURES", "PROFILE_FEATURES", "SETTINGS", "EvalReport",
    "FeatureMatrix", "ablation", "bootstrap_evaluate", "build_feature_matrix", "format_ablation",
    "impute_duration", "normalize", "prepare", "DEFAULTS", "KINDS", "MLP", "GradientBoosting",
    "Lasso", "LinearSVR", "ModelSpec", "RandomForest", "RegressionTree", "SchemaError", "fit",
    "lasso_path_max", "mlp_loss_grad", "predict",
]
