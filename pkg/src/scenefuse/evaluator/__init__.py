"""Evaluation: word-accuracy reports, end-to-end pipeline, overhead accounting."""

from scenefuse.evaluator.metrics import (
    CropOutcome,
    EvalReport,
    GroupStats,
    SplitReport,
    aggregate_outcomes,
    evaluate,
    report_deltas,
)
from scenefuse.evaluator.pipeline import (
    GroundTruthDetector,
    OverheadReport,
    PipelineResult,
    SceneTrace,
    overhead_report,
    run_pipeline,
    training_overhead,
)

__all__ = [
    "CropOutcome",
    "GroupStats",
    "SplitReport",
    "EvalReport",
    "aggregate_outcomes",
    "evaluate",
    "report_deltas",
    "GroundTruthDetector",
    "SceneTrace",
    "PipelineResult",
    "OverheadReport",
    "run_pipeline",
    "overhead_report",
    "training_overhead",
]
