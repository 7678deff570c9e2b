"""Two-point geodesic problem by shooting on the initial momenta."""

import logging
from dataclasses import dataclass, fields
from typing import Any, Mapping, Optional, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from src.action.trajectory import trajectory_from_nodes, uniform_grid
from src.calculus.operators import gradient
from src.chain.errors import BoundaryStart, ConfigError, GraphFlowError, ShootingFailed
from src.chain.markov import MarkovChain, as_measure, is_interior
from src.elliptic.tangent import project_flux, solve_tangent
from src.transport.solver import SolveReport, SolverOptions, distance_W
from .integrator import GeodesicState, REACHED_TMAX, geodesic_speed, integrate_ray


logger = logging.getLogger(__name__)


@dataclass
class ShootingOptions:
    steps: int = 64
    rtol: float = 1e-10
    bvp_tol: float = 1e-8
    max_newton: int = 30
    fd_step: float = 1e-7
    eps_bd: float = 1e-12
    dt_min: float = 1e-9
    restart_from_convex: bool = True
    restart_steps: int = 32

    def __post_init__(self):
        if self.steps < 2 or self.max_newton < 1 or self.bvp_tol <= 0:
            raise ConfigError("shooting needs steps >= 2, max_newton >= 1 and bvp_tol > 0")

    @classmethod
    def from_config(cls, section: Mapping[str, Any], **overrides: Any) -> "ShootingOptions":
        known = {f.name for f in fields(cls)}
        values = {k: v for k, v in dict(section).items() if k in known}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


class _Shooter:
    def __init__(self, mu0: NDArray, mu1: NDArray, chain: MarkovChain, opts: ShootingOptions):
        self.mu0 = mu0
        self.mu1 = mu1
        self.chain = chain
        self.opts = opts

    def initial_state(self, z: NDArray) -> GeodesicState:
        psi = np.concatenate([[0.0], z[:-1]])
        return GeodesicState(mu=self.mu0, h=float(z[-1]), grad_psi=gradient(psi, self.chain))

    def endpoint(self, z: NDArray, stops=None):
        ray = integrate_ray(
            self.initial_state(z), self.chain, t_max=1.0, eps_bd=self.opts.eps_bd,
            dt_min=self.opts.dt_min, rtol=self.opts.rtol, stops=stops,
        )
        if ray.stop_reason != REACHED_TMAX:
            return None, ray
        return ray.mu[-1] - self.mu1, ray

    def residual(self, z: NDArray) -> Optional[NDArray[np.float64]]:
        mismatch, _ = self.endpoint(z)
        return mismatch

    def jacobian(self, z: NDArray, F: NDArray) -> NDArray[np.float64]:
        J = np.zeros((F.size, z.size))
        for j in range(z.size):
            dz = np.zeros_like(z)
            dz[j] = self.opts.fd_step * max(1.0, abs(z[j]))
            shifted = self.residual(z + dz)
            if shifted is None:
                shifted = self.residual(z - dz)
                if shifted is None:
                    raise ShootingFailed("finite-difference step left the interior")
                J[:, j] = (F - shifted) / dz[j]
            else:
                J[:, j] = (shifted - F) / dz[j]
        return J

    def newton(self, z: NDArray) -> Tuple[NDArray, float, int, bool]:
        """Damped Newton with backtracking on the endpoint mismatch."""
        F = self.residual(z)
        if F is None:
            return z, np.inf, 0, False
        norm = float(np.max(np.abs(F)))
        for iteration in range(1, self.opts.max_newton + 1):
            if norm <= self.opts.bvp_tol:
                return z, norm, iteration - 1, True
            J = self.jacobian(z, F)
            step, *_ = np.linalg.lstsq(J, -F, rcond=None)
            scale = 1.0
            for _ in range(25):
                candidate = z + scale * step
                F_new = self.residual(candidate)
                if F_new is not None and float(np.max(np.abs(F_new))) < (1.0 - 1e-4 * scale) * norm:
                    z, F = candidate, F_new
                    norm = float(np.max(np.abs(F)))
                    break
                scale *= 0.5
            else:
                logger.debug(f"Shooting line search failed at mismatch {norm:.3e}")
                return z, norm, iteration, False
            logger.debug(f"Newton iteration {iteration}: mismatch {norm:.3e}, damping {scale:g}")
        return z, norm, self.opts.max_newton, norm <= self.opts.bvp_tol


def _momenta_from_tangent(mu0: NDArray, mu1: NDArray, chain: MarkovChain) -> NDArray[np.float64]:
    solve = solve_tangent(mu0, mu1 - mu0, chain)
    return np.concatenate([solve.psi[1:] - solve.psi[0], [solve.h]])


def _momenta_from_convex(mu0: NDArray, mu1: NDArray, chain: MarkovChain, steps: int) -> Optional[NDArray]:
    try:
        report = distance_W(mu0, mu1, chain, opts=SolverOptions(steps=steps))
    except GraphFlowError as e:
        logger.warning(f"Convex warm start unavailable: {e}")
        return None
    traj = report.trajectory
    if traj.psi is not None:
        psi = traj.psi[0]
    else:
        psi = project_flux(traj.midpoints[0], traj.V[0], chain).psi
    return np.concatenate([psi[1:] - psi[0], [traj.h[0]]])


def shoot(
    mu0: ArrayLike,
    mu1: ArrayLike,
    chain: MarkovChain,
    opts: Optional[ShootingOptions] = None,
) -> SolveReport:
    """Geodesic between interior measures by shooting on (psi0, h0).

    The reported value is the conserved speed of the converged geodesic,
    which equals its action on the unit time interval.

    Raises:
        BoundaryStart: if an endpoint is not strictly positive
        ShootingFailed: if no initial momenta reach mu1 within bvp_tol
    """
    opts = opts or ShootingOptions()
    mu0 = as_measure(mu0, chain)
    mu1 = as_measure(mu1, chain)
    if not (is_interior(mu0) and is_interior(mu1)):
        raise BoundaryStart("shooting needs strictly positive endpoints")

    shooter = _Shooter(mu0, mu1, chain, opts)
    z, mismatch, iterations, ok = shooter.newton(_momenta_from_tangent(mu0, mu1, chain))
    if not ok and opts.restart_from_convex:
        logger.info(f"Shooting from the tangent guess stalled at {mismatch:.3e}; restarting from the convex solve")
        guess = _momenta_from_convex(mu0, mu1, chain, opts.restart_steps)
        if guess is not None:
            z, mismatch, more, ok = shooter.newton(guess)
            iterations += more
    if not ok:
        raise ShootingFailed(f"endpoint mismatch {mismatch:.3e} above {opts.bvp_tol:.0e}")

    grid = uniform_grid(opts.steps)
    _, ray = shooter.endpoint(z, stops=grid[1:-1])
    samples = [int(np.flatnonzero(ray.times == t)[0]) for t in grid]
    nodes = ray.mu[samples]
    nodes[0], nodes[-1] = mu0, mu1
    traj = trajectory_from_nodes(nodes, chain)

    start = shooter.initial_state(z)
    value = geodesic_speed(start, chain)
    logger.info(f"Shooting converged in {iterations} Newton steps: value {value:.10g}, mismatch {mismatch:.2e}")
    return SolveReport(
        metric="shoot",
        value=float(value),
        distance=float(np.sqrt(value)),
        trajectory=traj.with_meta(h0=start.h, psi0=np.concatenate([[0.0], z[:-1]]).tolist()),
        iterations=iterations,
        converged=True,
        speed_variation=float(np.max(ray.speed) / np.min(ray.speed) - 1.0) if np.min(ray.speed) > 0 else 0.0,
        min_interior_mass=float(np.min(nodes[1:-1])),
        residual=mismatch,
        extra={"h0": start.h, "speed_drift": ray.speed_drift},
    )
