"""Strong geodesic system: adaptive RK4 rays and two-point shooting."""

from .integrator import (
    GeodesicState, GeodesicSystem, RayResult, geodesic_rhs, geodesic_speed,
    integrate_ray, initial_direction, ray_fan, REACHED_TMAX, BOUNDARY_TOUCH,
    STEP_UNDERFLOW
)
from .shooting import ShootingOptions, shoot

__all__ = [
    'GeodesicState', 'GeodesicSystem', 'RayResult', 'geodesic_rhs',
    'geodesic_speed', 'integrate_ray', 'initial_direction', 'ray_fan',
    'REACHED_TMAX', 'BOUNDARY_TOUCH', 'STEP_UNDERFLOW',
    'ShootingOptions', 'shoot'
]
