"""Benchmark metrics, trial protocols and report emission."""

from sawlab.bench.disturbance import (
    DIRECTIONS,
    CellResult,
    DisturbanceGrid,
    TrialResult,
    cell_seed,
    grid_from_logs,
    run_disturbance_sweep,
    score_trial,
)
from sawlab.bench.metrics import (
    DEFAULT_CIRCLE_RADIUS,
    EnergyResult,
    RotationResult,
    VelocityResult,
    energy_metric,
    positive_work,
    rotation_metrics,
    velocity_metric,
)
from sawlab.bench.protocols import Phase, record_episode, rotation_trial, velocity_trial
from sawlab.bench.report import (
    CSV_COLUMNS,
    BenchReport,
    RotationRow,
    emit_report,
    read_report,
    to_csv,
    to_svg,
)

__all__ = [
    "BenchReport", "CSV_COLUMNS", "CellResult", "DEFAULT_CIRCLE_RADIUS", "DIRECTIONS",
    "DisturbanceGrid", "EnergyResult", "Phase", "RotationResult", "RotationRow", "TrialResult",
    "VelocityResult", "cell_seed", "emit_report", "energy_metric", "grid_from_logs",
    "positive_work", "read_report", "record_episode", "rotation_metrics", "rotation_trial",
    "run_disturbance_sweep", "score_trial", "to_csv", "to_svg", "velocity_metric",
    "velocity_trial",
]
