"""Discrete trajectories and their action functionals."""

from .trajectory import (
    Trajectory, continuity_residual, validate, trajectory_from_nodes,
    uniform_grid, SOLVER_CE_TOL, FILE_CE_TOL
)
from .functionals import (
    action_quad, action_linsq, shift_cost, speed_profile, speed_variation,
    kinetic_profile, rearrange_source, antisymmetrize
)
from .io import trajectory_frame, write_trajectory_csv, read_trajectory_csv

__all__ = [
    'Trajectory', 'continuity_residual', 'validate', 'trajectory_from_nodes',
    'uniform_grid', 'SOLVER_CE_TOL', 'FILE_CE_TOL',
    'action_quad', 'action_linsq', 'shift_cost', 'speed_profile',
    'speed_variation', 'kinetic_profile', 'rearrange_source', 'antisymmetrize',
    'trajectory_frame', 'write_trajectory_csv', 'read_trajectory_csv'
]
