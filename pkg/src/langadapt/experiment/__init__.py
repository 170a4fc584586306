from .pipeline import (
    ArtifactCache,
    Manifest,
    Pipeline,
    PipelineOutput,
    StageError,
    error_reduction_summary,
    format_summary,
    format_table,
    report_from_runs,
    run_pipeline,
)
from .stats import ExperimentResult, aggregate_results, relative_error_reduction, select_pretrain_epoch
from .synthetic import SyntheticLanguage, default_languages, make_language

__all__ = [
    "ArtifactCache",
    "ExperimentResult",
    "Manifest",
    "Pipeline",
    "PipelineOutput",
    "StageError",
    "SyntheticLanguage",
    "aggregate_results",
    "default_languages",
    "error_reduction_summary",
    "format_summary",
    "format_table",
    "make_language",
    "relative_error_reduction",
    "report_from_runs",
    "run_pipeline",
    "select_pretrain_epoch",
]
