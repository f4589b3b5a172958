"""Optimization loops, metrics, result files and the command line."""

from .loop import Algorithm, TrialLog, run_optimization
from .metrics import best_so_far, log_efficiency, predictive_metrics
from .tasks import BenchmarkTask, build_task

__all__ = [
    "Algorithm",
    "BenchmarkTask",
    "TrialLog",
    "best_so_far",
    "build_task",
    "log_efficiency",
    "predictive_metrics",
    "run_optimization",
]
