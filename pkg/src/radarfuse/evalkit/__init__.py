"""Detection metrics and the ablation / lambda-sweep experiment runners."""
from .experiments import EvalReport, ablation_table, lambda_sweep, run_ablation, sweep_table
from .metrics import (
    DEFAULT_IOU_THRESHOLDS,
    EvalConfig,
    EvalError,
    FrameDetections,
    average_precision,
    counts,
    evaluate,
    interpolated_ap,
    match_class,
    mean_ap,
    precision_recall,
)

__all__ = [
    "DEFAULT_IOU_THRESHOLDS",
    "EvalConfig",
    "EvalError",
    "EvalReport",
    "FrameDetections",
    "ablation_table",
    "average_precision",
    "counts",
    "evaluate",
    "interpolated_ap",
    "lambda_sweep",
    "match_class",
    "mean_ap",
    "precision_recall",
    "run_ablation",
    "sweep_table",
]

