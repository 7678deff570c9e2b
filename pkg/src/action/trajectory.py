"""Discrete trajectories: node measures with interval fluxes and sources."""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray

from src.calculus.logmean import log_mean_unchecked, smoothed_log_mean
from src.calculus.operators import divergence
from src.chain.errors import InvalidTrajectory, MassMismatch, NotInterior, SchemaError
from src.chain.markov import MarkovChain
from src.elliptic.tangent import solve_weighted_potentials


logger = logging.getLogger(__name__)

SOLVER_CE_TOL = 1e-9
FILE_CE_TOL = 1e-6
GRID_TOL = 1e-12


def _frozen(values: ArrayLike) -> NDArray[np.float64]:
    array = np.array(values, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Trajectory:
    """Time-discrete curve on the uniform grid t_k = k/N.

    Attributes:
        grid: N+1 node times
        mu: (N+1, n) node measures
        V: (N, n, n) interval fluxes
        h: (N,) interval source rates
        psi: optional (N, n) interval potentials
        meta: free-form diagnostics (optimal shifts, solver stage, ...)
    """

    grid: NDArray[np.float64]
    mu: NDArray[np.float64]
    V: NDArray[np.float64]
    h: NDArray[np.float64]
    psi: Optional[NDArray[np.float64]] = None
    meta: Dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in ("grid", "mu", "V", "h"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if self.psi is not None:
            object.__setattr__(self, "psi", _frozen(self.psi))

        steps = self.h.shape[0]
        n = self.mu.shape[1] if self.mu.ndim == 2 else -1
        if steps < 1 or self.grid.shape != (steps + 1,) or self.mu.shape != (steps + 1, n):
            raise SchemaError("trajectory arrays disagree on the number of intervals")
        if self.V.shape != (steps, n, n):
            raise SchemaError(f"fluxes must have shape {(steps, n, n)}, got {self.V.shape}")
        if self.psi is not None and self.psi.shape != (steps, n):
            raise SchemaError(f"potentials must have shape {(steps, n)}, got {self.psi.shape}")
        uniform = np.linspace(0.0, 1.0, steps + 1)
        if np.max(np.abs(self.grid - uniform)) > GRID_TOL:
            raise InvalidTrajectory("only the uniform grid t_k = k/N is supported")

    @property
    def steps(self) -> int:
        return int(self.h.shape[0])

    @property
    def dt(self) -> float:
        return 1.0 / self.steps

    @property
    def midpoints(self) -> NDArray[np.float64]:
        """(N, n) interval midpoint measures (mu_k + mu_{k+1})/2."""
        return 0.5 * (self.mu[:-1] + self.mu[1:])

    def with_meta(self, **values: Any) -> "Trajectory":
        meta = dict(self.meta)
        meta.update(values)
        return Trajectory(self.grid, self.mu, self.V, self.h, self.psi, meta)


def uniform_grid(steps: int) -> NDArray[np.float64]:
    return np.linspace(0.0, 1.0, steps + 1)


def continuity_residual(traj: Trajectory, chain: MarkovChain) -> float:
    """Max-norm defect of (mu_{k+1} - mu_k) N + div V_k - h_k p."""
    rate = np.diff(traj.mu, axis=0) * traj.steps
    defect = rate + divergence(traj.V, chain) - traj.h[:, None] * chain.p[None, :]
    return float(np.max(np.abs(defect)))


def validate(traj: Trajectory, chain: MarkovChain, ce_tol: float = SOLVER_CE_TOL) -> Trajectory:
    """Check every trajectory invariant; returns the trajectory unchanged."""
    if traj.mu.shape[1] != chain.n:
        raise InvalidTrajectory(f"trajectory has {traj.mu.shape[1]} states, chain has {chain.n}")
    if not np.all(np.isfinite(traj.mu)) or np.any(traj.mu < 0):
        raise InvalidTrajectory("node measures must be finite and nonnegative")
    if not (np.all(np.isfinite(traj.V)) and np.all(np.isfinite(traj.h))):
        raise InvalidTrajectory("fluxes and sources must be finite")

    residual = continuity_residual(traj, chain)
    if residual > ce_tol:
        raise InvalidTrajectory(f"continuity residual {residual:.3e} exceeds {ce_tol:.1e}")

    if traj.psi is not None:
        theta = log_mean_unchecked(traj.midpoints[:, :, None], traj.midpoints[:, None, :])
        grad = traj.psi[:, None, :] - traj.psi[:, :, None]
        expected = np.where(chain.edges, theta * grad, 0.0)
        scale = max(1.0, float(np.max(np.abs(expected))))
        mismatch = float(np.max(np.abs(np.where(chain.edges, traj.V, 0.0) - expected)))
        if mismatch > 1e-8 * scale:
            raise InvalidTrajectory(f"fluxes disagree with mobility * grad psi by {mismatch:.3e}")
    return traj


def trajectory_from_nodes(
    mu_nodes: ArrayLike,
    chain: MarkovChain,
    delta: float = 0.0,
    conservative: bool = False,
) -> Trajectory:
    """Rebuild interval sources, potentials and fluxes from node measures.

    On each interval the midpoint measure carries the tangent solve of
    rho_k = N (mu_{k+1} - mu_k). With ``delta`` > 0 the mobility is the
    smoothed one and the potentials are not stored (they describe the
    smoothed flux, not mobility(midpoint) * grad psi). With ``conservative``
    the source is forced to zero, which requires equal node masses.
    """
    mu_nodes = np.asarray(mu_nodes, dtype=float)
    steps = mu_nodes.shape[0] - 1
    mid = 0.5 * (mu_nodes[:-1] + mu_nodes[1:])
    rho = np.diff(mu_nodes, axis=0) * steps
    h = rho @ chain.pi

    if conservative:
        mass_drift = float(np.max(np.abs(h))) / steps
        if mass_drift > 1e-10 * max(1.0, float(np.max(np.abs(mu_nodes)))):
            raise MassMismatch(f"node masses drift by {mass_drift:.3e} on a conservative path")
        nu = -rho + h[:, None]
        h = np.zeros(steps)
    else:
        nu = h[:, None] * chain.p[None, :] - rho

    if delta > 0:
        theta = smoothed_log_mean(mid[:, :, None], mid[:, None, :], delta)
    else:
        if np.any(mid <= 0):
            raise NotInterior("a midpoint measure has a vanishing entry; pass delta > 0")
        theta = log_mean_unchecked(mid[:, :, None], mid[:, None, :])

    psi, _ = solve_weighted_potentials(theta * chain.conductance, chain.pi, nu)
    grad = psi[:, None, :] - psi[:, :, None]
    V = np.where(chain.edges, theta * grad, 0.0)
    return Trajectory(
        grid=uniform_grid(steps), mu=mu_nodes, V=V, h=h, psi=psi if delta == 0 else None
    )
