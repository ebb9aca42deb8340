"""Shallow model trees with gradient-based split finding.

Trees hold a linear or logistic model in every node; splits are chosen either
by the classical impurity criterion or by a gradient-norm approximation of the
true retraining gain, optionally corrected into a per-subset renormalized
feature space. Includes a k-fold benchmark harness and a CLI.
"""

from .data import DataError, Dataset, RowIndexSet, Task, load_csv, one_hot_encode
from .evaluate import (
    EvalError,
    EvalReport,
    KFoldResult,
    auc,
    benchmark,
    generate_v_dataset,
    kfold_evaluate,
    kfold_indices,
    r_squared,
)
from .split import (
    SplitDecision,
    best_split_gradient,
    best_split_impurity,
    enumerate_candidates,
    exact_gain_oracle,
    gradient_gain,
)
from .tree import (
    Criterion,
    ModelFormatError,
    ModelTree,
    TrainConfig,
    TreeNode,
    build_tree,
    denormalize_tree,
    explain,
    from_json,
    load_model,
    render_explanation,
    save_model,
    to_json,
)
from .weak import (
    GdConfig,
    Link,
    NormalizationParams,
    NormKind,
    TrainingError,
    WeakModelParams,
    apply_normalization,
    fit_normalization,
    loss_value,
    params_to_normalized,
    params_to_raw,
    sample_gradient,
    sample_gradients,
    train_weak_model,
)
from .weak import predict as predict_weak

__version__ = "0.1.0"

__all__ = [
    "DataError", "Dataset", "RowIndexSet", "Task", "load_csv", "one_hot_encode",
    "EvalError", "EvalReport", "KFoldResult", "auc", "benchmark",
    "generate_v_dataset", "kfold_evaluate", "kfold_indices", "r_squared",
    "SplitDecision", "best_split_gradient", "best_split_impurity",
    "enumerate_candidates", "exact_gain_oracle", "gradient_gain",
    "Criterion", "ModelFormatError", "ModelTree", "TrainConfig", "TreeNode",
    "build_tree", "denormalize_tree", "explain", "from_json", "load_model",
    "render_explanation", "save_model", "to_json",
    "GdConfig", "Link", "NormalizationParams", "NormKind", "TrainingError",
    "WeakModelParams", "apply_normalization", "fit_normalization", "loss_value",
    "params_to_normalized", "params_to_raw", "predict_weak", "sample_gradient",
    "sample_gradients", "train_weak_model",
    "__version__",
]
