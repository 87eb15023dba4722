"""Split protocol, phase orchestration, interleaved training and metrics."""

from .data import PreparedData, prepare, resolve_threshold
from .experiment import (
    CSV_COLUMNS,
    PHASES,
    MetricReport,
    MetricSummary,
    format_table,
    mean_auc,
    read_csv,
    read_csv_config,
    run_cell,
    run_experiment,
    summarize,
    write_csv,
    write_long_format,
)
from .metrics import UndefinedMetricError, auc, f1
from .split import GROUPS, DatasetSplit, SplitError, SplitSpec, split_dataset
from .training import FreezeAuditError, PhaseLog, Trainer

__all__ = [
    "CSV_COLUMNS", "GROUPS", "PHASES", "DatasetSplit", "FreezeAuditError", "MetricReport",
    "MetricSummary", "PhaseLog", "PreparedData", "SplitError", "SplitSpec", "Trainer",
    "UndefinedMetricError", "auc", "f1", "format_table", "mean_auc", "prepare", "read_csv",
    "read_csv_config", "resolve_threshold", "run_cell", "run_experiment", "split_dataset",
    "summarize", "write_csv", "write_long_format",
]
