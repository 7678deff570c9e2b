"""Action functionals and the two action-decreasing post-processing maps."""

import logging

import numpy as np
from numpy.typing import NDArray

from src.calculus.operators import a_prime, divergence
from src.chain.markov import MarkovChain
from .trajectory import FILE_CE_TOL, SOLVER_CE_TOL, Trajectory, validate


logger = logging.getLogger(__name__)


def kinetic_profile(traj: Trajectory, chain: MarkovChain) -> NDArray[np.float64]:
    """A'(midpoint_k, V_k) per interval, +inf where a flux leaves empty mass."""
    mid = traj.midpoints
    return np.array([a_prime(mid[k], traj.V[k], chain) for k in range(traj.steps)])


def speed_profile(traj: Trajectory, chain: MarkovChain) -> NDArray[np.float64]:
    """Per-interval amplitude a^2 h_k^2 + b^2 A'(midpoint_k, V_k)."""
    return chain.a ** 2 * traj.h ** 2 + chain.b ** 2 * kinetic_profile(traj, chain)


def action_quad(traj: Trajectory, chain: MarkovChain, ce_tol: float = SOLVER_CE_TOL) -> float:
    validate(traj, chain, ce_tol)
    return float(traj.dt * np.sum(speed_profile(traj, chain)))


def action_linsq(traj: Trajectory, chain: MarkovChain, ce_tol: float = SOLVER_CE_TOL) -> float:
    """Square of the integrated linear amplitude; never above :func:`action_quad`."""
    validate(traj, chain, ce_tol)
    return float((traj.dt * np.sum(np.sqrt(speed_profile(traj, chain)))) ** 2)


def shift_cost(traj: Trajectory, chain: MarkovChain, ce_tol: float = SOLVER_CE_TOL) -> float:
    """a^2 (int |h|)^2 + b^2 (int sqrt(A'))^2 with the midpoint rule."""
    validate(traj, chain, ce_tol)
    source = traj.dt * np.sum(np.abs(traj.h))
    transport = traj.dt * np.sum(np.sqrt(kinetic_profile(traj, chain)))
    return float(chain.a ** 2 * source ** 2 + chain.b ** 2 * transport ** 2)


def speed_variation(traj: Trajectory, chain: MarkovChain) -> float:
    """max/min - 1 of the speed profile; 0 for a motionless path."""
    profile = speed_profile(traj, chain)
    top = float(np.max(profile))
    if top == 0.0:
        return 0.0
    bottom = float(np.min(profile))
    return float("inf") if bottom <= 0.0 else top / bottom - 1.0


def rearrange_source(traj: Trajectory, chain: MarkovChain, ce_tol: float = FILE_CE_TOL) -> Trajectory:
    """Front-load the source: sort h in descending order and re-integrate mu.

    The fluxes are kept; node measures follow from the discrete continuity
    equation starting at mu_0, so interim masses can only grow. Potentials
    are dropped because they no longer match the new midpoints.
    """
    validate(traj, chain, ce_tol)
    order = np.argsort(-traj.h, kind="stable")
    h_sorted = traj.h[order]
    if np.array_equal(h_sorted, traj.h):
        return traj

    rates = h_sorted[:, None] * chain.p[None, :] - divergence(traj.V, chain)
    mu = np.empty_like(traj.mu)
    mu[0] = traj.mu[0]
    mu[1:] = traj.mu[0] + np.cumsum(rates, axis=0) * traj.dt
    drift = float(np.max(np.abs(mu[-1] - traj.mu[-1])))
    logger.debug(f"Rearranged source, terminal round-off {drift:.3e}")
    mu[-1] = traj.mu[-1]
    mu = np.maximum(mu, 0.0)
    return Trajectory(traj.grid, mu, traj.V, h_sorted, None, dict(traj.meta))


def antisymmetrize(traj: Trajectory, chain: MarkovChain) -> Trajectory:
    """Replace every flux by its antisymmetric part; divergence is unchanged."""
    V = 0.5 * (traj.V - np.swapaxes(traj.V, -1, -2))
    return Trajectory(traj.grid, traj.mu, V, traj.h, traj.psi, dict(traj.meta))
