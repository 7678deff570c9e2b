"""Distance computation: W by convex action minimization, ME and D."""

from .solver import (
    SolverOptions, SolveReport, ReducedAction, NonlocalityDiagnostic,
    distance_W, distance_ME, check_nonlocality, refinement_study
)
from .shift import ShiftObjective, MetricComparison, distance_D, compare_metrics

__all__ = [
    'SolverOptions', 'SolveReport', 'ReducedAction', 'NonlocalityDiagnostic',
    'distance_W', 'distance_ME', 'check_nonlocality', 'refinement_study',
    'ShiftObjective', 'MetricComparison', 'distance_D', 'compare_metrics'
]
