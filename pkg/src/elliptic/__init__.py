"""Continuity-equation solves for the weighted graph operator A_mu."""

from .tangent import (
    TangentSolve, apply_A, solve_potential, solve_tangent, project_flux,
    laplacian, bordered_system, solve_weighted_potentials
)

__all__ = [
    'TangentSolve', 'apply_A', 'solve_potential', 'solve_tangent',
    'project_flux', 'laplacian', 'bordered_system', 'solve_weighted_potentials'
]
