"""Discrete differential calculus: logarithmic mean, gradient, divergence."""

from .logmean import (
    log_mean, log_mean_d1, log_mean_d2, smoothed_log_mean, smoothed_log_mean_d1,
    log_mean_unchecked, log_mean_d1_unchecked
)
from .operators import (
    gradient, divergence, pair_node, pair_edge, mobility, edge_norm_sq, alpha,
    a_prime
)

__all__ = [
    'log_mean', 'log_mean_d1', 'log_mean_d2', 'smoothed_log_mean',
    'smoothed_log_mean_d1', 'log_mean_unchecked', 'log_mean_d1_unchecked',
    'gradient', 'divergence', 'pair_node', 'pair_edge', 'mobility',
    'edge_norm_sq', 'alpha', 'a_prime'
]
