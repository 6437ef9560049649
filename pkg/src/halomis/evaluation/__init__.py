"""Cross-validated experiment runner, metrics and model selection."""
from ..metrics import (
    ConfusionCounts,
    MetricReport,
    evaluate_predictions,
    metrics_from_confusion,
    pr_auc,
    roc_auc,
)
from .cv import (
    CSV_FIELDS,
    PIPELINES,
    CVReport,
    FoldResult,
    pipeline_features,
    run_cv,
    select_best,
    write_results_csv,
)

__all__ = [
    "CSV_FIELDS",
    "PIPELINES",
    "CVReport",
    "ConfusionCounts",
    "FoldResult",
    "MetricReport",
    "evaluate_predictions",
    "metrics_from_confusion",
    "pipeline_features",
    "pr_auc",
    "roc_auc",
    "run_cv",
    "select_best",
    "write_results_csv",
]
