"""
Instantaneous continuity-equation solves.

For a measure mu with every entry positive the operator

    A_mu psi = div(mobility(mu) * grad psi)

is self-adjoint for <., .>_pi with kernel the constants. Multiplying by pi
gives the symmetric weighted Laplacian L = diag(W 1) - W with
W(x, y) = theta(mu(x), mu(y)) pi(x) K(x, y), so A_mu psi = nu is the system
L psi = -pi * nu. The gauge <psi, 1>_pi = 0 is imposed by bordering L with
the row and column pi.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike, NDArray

from src.calculus.operators import divergence, gradient, mobility, pair_node
from src.chain.errors import NotInterior, SingularSystem, UnsolvableSystem
from src.chain.markov import EdgeField, MarkovChain, Measure, is_interior


logger = logging.getLogger(__name__)

CONDITION_LIMIT = 1e13
SOLVABILITY_TOL = 1e-10


@dataclass(frozen=True)
class TangentSolve:
    """Potential pair (grad psi, h) solving rho + A_mu psi = h p."""

    grad_psi: EdgeField
    h: float
    psi: NDArray[np.float64]
    residual: float


def laplacian(weights: ArrayLike) -> NDArray[np.float64]:
    """diag(W 1) - W for a symmetric weight matrix or a stack of them."""
    weights = np.asarray(weights, dtype=float)
    degree = weights.sum(axis=-1)
    out = -weights.copy()
    idx = np.arange(weights.shape[-1])
    out[..., idx, idx] += degree
    return out


def bordered_system(weights: ArrayLike, pi: ArrayLike) -> NDArray[np.float64]:
    """Gauge-fixed matrix [[L, pi], [pi^T, 0]], batched over leading axes."""
    L = laplacian(weights)
    pi = np.asarray(pi, dtype=float)
    n = L.shape[-1]
    system = np.zeros(L.shape[:-2] + (n + 1, n + 1))
    system[..., :n, :n] = L
    system[..., :n, n] = pi
    system[..., n, :n] = pi
    return system


def solve_weighted_potentials(
    weights: ArrayLike, pi: ArrayLike, nu: ArrayLike
) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Solve L_k psi_k = -pi * nu_k for a stack of weight matrices.

    Returns ``(psi, multiplier)``; the multiplier equals -<nu_k, 1>_pi and
    vanishes exactly when the system is consistent.
    """
    nu = np.asarray(nu, dtype=float)
    pi = np.asarray(pi, dtype=float)
    system = bordered_system(weights, pi)
    n = pi.size
    rhs = np.zeros(nu.shape[:-1] + (n + 1,))
    rhs[..., :n] = -pi * nu
    try:
        solution = np.linalg.solve(system, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as e:
        raise SingularSystem(f"bordered Laplacian is singular: {e}") from e
    return solution[..., :n], solution[..., n]


def _mobility_weights(mu: Measure, chain: MarkovChain) -> NDArray[np.float64]:
    return mobility(mu) * chain.conductance


def _potential(mu: Measure, nu: ArrayLike, chain: MarkovChain) -> NDArray[np.float64]:
    mu = np.asarray(mu, dtype=float)
    if not is_interior(mu):
        raise NotInterior(f"measure has a vanishing entry (min {float(np.min(mu)):.3e})")
    system = bordered_system(_mobility_weights(mu, chain), chain.pi)
    condition = np.linalg.cond(system)
    if not np.isfinite(condition) or condition > CONDITION_LIMIT:
        raise SingularSystem(f"condition number {condition:.3e} exceeds {CONDITION_LIMIT:.0e}")

    rhs = np.zeros(chain.n + 1)
    rhs[:-1] = -chain.pi * np.asarray(nu, dtype=float)
    solution = scipy.linalg.solve(system, rhs, assume_a="sym")
    return solution[:-1]


def apply_A(mu: Measure, psi: ArrayLike, chain: MarkovChain) -> NDArray[np.float64]:
    """div(mobility(mu) * grad psi)."""
    return divergence(mobility(mu) * gradient(psi, chain), chain)


def solve_potential(mu: Measure, nu: ArrayLike, chain: MarkovChain) -> TangentSolve:
    """Solve A_mu psi = nu with <psi, 1>_pi = 0.

    Raises:
        NotInterior: if some entry of ``mu`` vanishes
        UnsolvableSystem: if <nu, 1>_pi differs from zero
        SingularSystem: on numerical rank deficiency
    """
    nu = np.asarray(nu, dtype=float)
    mean = pair_node(nu, np.ones(chain.n), chain)
    scale = max(1.0, float(np.sum(np.abs(nu) * chain.pi)))
    if abs(mean) > SOLVABILITY_TOL * scale:
        raise UnsolvableSystem(f"<nu, 1>_pi = {mean:.3e}; A_mu only reaches mean-zero vectors")
    psi = _potential(mu, nu, chain)
    residual = float(np.max(np.abs(apply_A(mu, psi, chain) - nu)))
    return TangentSolve(grad_psi=gradient(psi, chain), h=0.0, psi=psi, residual=residual)


def solve_tangent(mu: Measure, rho: ArrayLike, chain: MarkovChain) -> TangentSolve:
    """Split a tangent vector rho into a source rate h and a potential flow.

    h = <rho, 1>_pi, and psi solves A_mu psi = h p - rho.
    """
    rho = np.asarray(rho, dtype=float)
    h = pair_node(rho, np.ones(chain.n), chain)
    psi = _potential(mu, h * chain.p - rho, chain)
    residual = float(np.max(np.abs(rho + apply_A(mu, psi, chain) - h * chain.p)))
    logger.debug(f"Tangent solve: h={h:.6g}, residual={residual:.3e}")
    return TangentSolve(grad_psi=gradient(psi, chain), h=h, psi=psi, residual=residual)


def project_flux(mu: Measure, V: ArrayLike, chain: MarkovChain) -> TangentSolve:
    """Potential flow with the same divergence as V (the L2(mobility) projection)."""
    nu = divergence(V, chain)
    psi = _potential(mu, nu, chain)
    residual = float(np.max(np.abs(apply_A(mu, psi, chain) - nu)))
    return TangentSolve(grad_psi=gradient(psi, chain), h=0.0, psi=psi, residual=residual)
