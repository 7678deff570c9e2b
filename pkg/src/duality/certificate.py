"""
Hamilton-Jacobi dual certificates for W^2/2.

A time-dependent potential phi is a subsolution when

    g(mu) = <phi', mu>_pi + 1/(2b^2) ||grad phi||^2_mu <= 0

for every nonnegative mu. g is concave and 1-homogeneous in mu, so it is
enough to check its maximum on the slice <mu, 1>_pi = 1. Every feasible
phi bounds W^2/2 from below by

    <phi_1, mu1>_pi - <phi_0, mu0>_pi - 1/(2a^2) int <phi_t, p>_pi^2 dt.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from src.calculus.logmean import log_mean_d1_unchecked, log_mean_unchecked
from src.calculus.operators import gradient
from src.chain.errors import NoPotentials, NotInterior
from src.chain.markov import EdgeField, MarkovChain
from src.transport.solver import SolveReport, SolverOptions, distance_W


logger = logging.getLogger(__name__)

FEAS_TOL = 1e-8
MASS_FLOOR = 1e-12
RANDOM_STARTS = 8
ASCENT_ITERATIONS = 2000
SCALING_STEPS = 20


@dataclass(frozen=True)
class DualCertificate:
    """Potentials phi at the node times of ``grid``, linear in between."""

    grid: NDArray[np.float64]
    phi: NDArray[np.float64]
    feasibility_margin: float
    dual_value: float
    meta: Dict[str, Any] = field(default_factory=dict, compare=False)

    @property
    def feasible(self) -> bool:
        return self.feasibility_margin <= FEAS_TOL


@dataclass(frozen=True)
class GapReport:
    primal: float
    dual: float
    relative_gap: float
    feasibility_margin: float
    certificate: DualCertificate
    report: SolveReport


def _project_simplex(points: NDArray) -> NDArray[np.float64]:
    """Euclidean projection of each row onto the standard simplex."""
    count, n = points.shape
    ordered = -np.sort(-points, axis=1)
    cumulative = np.cumsum(ordered, axis=1) - 1.0
    ranks = np.arange(1, n + 1)
    support = ordered - cumulative / ranks > 0
    last = n - 1 - np.argmax(support[:, ::-1], axis=1)
    shift = cumulative[np.arange(count), last] / (last + 1)
    return np.maximum(points - shift[:, None], 0.0)


class _SurplusProblem:
    """g on the simplex in the coordinates nu = mu * pi (batched over rows)."""

    def __init__(self, phi_dot: NDArray, grad_phi: EdgeField, chain: MarkovChain):
        self.phi_dot = np.asarray(phi_dot, dtype=float)
        self.weight = np.where(chain.edges, np.asarray(grad_phi, dtype=float) ** 2, 0.0)
        self.flow = chain.pi[:, None] * chain.K
        self.K = chain.K
        self.pi = chain.pi
        self.kinetic_scale = 1.0 / (2.0 * chain.b ** 2)

    def value(self, nu: NDArray) -> NDArray[np.float64]:
        mu = nu / self.pi
        theta = log_mean_unchecked(mu[:, :, None], mu[:, None, :])
        kinetic = 0.5 * np.sum(self.weight * theta * self.flow, axis=(1, 2))
        return nu @ self.phi_dot + self.kinetic_scale * kinetic

    def gradient(self, nu: NDArray) -> NDArray[np.float64]:
        mu = np.maximum(nu / self.pi, MASS_FLOOR)
        d1 = log_mean_d1_unchecked(mu[:, :, None], mu[:, None, :])
        return self.phi_dot + self.kinetic_scale * np.sum(self.weight * d1 * self.K, axis=2)

    def maximize(self, starts: NDArray) -> float:
        nu = _project_simplex(starts)
        value = self.value(nu)
        step = np.ones(nu.shape[0])
        for _ in range(ASCENT_ITERATIONS):
            candidate = _project_simplex(nu + step[:, None] * self.gradient(nu))
            new_value = self.value(candidate)
            better = new_value >= value
            moved = np.max(np.abs(candidate - nu), axis=1)
            nu = np.where(better[:, None], candidate, nu)
            gain = np.where(better, new_value - value, 0.0)
            value = np.where(better, new_value, value)
            step = np.where(better, np.minimum(step * 1.5, 1e6), step * 0.5)
            settled = better & ((moved <= 1e-15) | (gain <= 1e-15 * (1.0 + np.abs(value))))
            if np.all(settled | (step < 1e-12)):
                break
        return float(np.max(value))


def hj_integrand(phi_dot: ArrayLike, grad_phi: EdgeField, mu: ArrayLike, chain: MarkovChain) -> float:
    """g(mu) = <phi', mu>_pi + 1/(2b^2) ||grad phi||^2_mu for any mu >= 0."""
    problem = _SurplusProblem(phi_dot, grad_phi, chain)
    nu = (np.asarray(mu, dtype=float) * chain.pi)[None, :]
    return float(problem.value(nu)[0])


def hj_surplus(
    phi_dot: ArrayLike,
    grad_phi: EdgeField,
    chain: MarkovChain,
    seed: int = 0,
    starts: Optional[Sequence[ArrayLike]] = None,
) -> float:
    """Maximum of the HJ integrand over measures with <mu, 1>_pi = 1.

    Projected gradient ascent from the vertices, the uniform measure,
    seeded Dirichlet draws and any extra ``starts`` (given as measures).
    A nonpositive result certifies the inequality on the whole cone.
    """
    problem = _SurplusProblem(phi_dot, grad_phi, chain)
    rng = np.random.default_rng(seed)
    n = chain.n
    points = [np.eye(n), chain.pi[None, :], rng.dirichlet(np.ones(n), size=RANDOM_STARTS)]
    if starts is not None:
        extra = np.atleast_2d(np.asarray(starts, dtype=float)) * chain.pi
        totals = extra.sum(axis=1, keepdims=True)
        points.append(extra[totals[:, 0] > 0] / totals[totals[:, 0] > 0])
    return problem.maximize(np.vstack(points))


def hj_sufficient(phi_dot: ArrayLike, grad_phi: EdgeField, chain: MarkovChain, tol: float = 0.0) -> bool:
    """Cheap sufficient test: phi'(x) + 1/(4b^2) sum_y grad phi(x, y)^2 K(x, y) <= tol.

    Bounding theta by the arithmetic mean and using detailed balance makes
    this pointwise condition imply the subsolution inequality.
    """
    grad_phi = np.where(chain.edges, np.asarray(grad_phi, dtype=float), 0.0)
    bound = np.asarray(phi_dot) + np.sum(grad_phi ** 2 * chain.K, axis=1) / (4.0 * chain.b ** 2)
    return bool(np.all(bound <= tol))


def dual_value(
    cert: DualCertificate, mu0: ArrayLike, mu1: ArrayLike, chain: MarkovChain
) -> float:
    """Dual objective with midpoint quadrature on the certificate grid."""
    return _dual_value(cert.grid, cert.phi, mu0, mu1, chain)


def _dual_value(grid: NDArray, phi: NDArray, mu0: ArrayLike, mu1: ArrayLike, chain: MarkovChain) -> float:
    widths = np.diff(grid)
    mid = 0.5 * (phi[:-1] + phi[1:])
    source = mid @ (chain.pi * chain.p)
    boundary = float(phi[-1] @ (chain.pi * np.asarray(mu1)) - phi[0] @ (chain.pi * np.asarray(mu0)))
    return boundary - float(np.sum(widths * source ** 2)) / (2.0 * chain.a ** 2)


def piece_surpluses(
    grid: NDArray, phi: NDArray, chain: MarkovChain, seed: int = 0, starts: Optional[NDArray] = None
) -> NDArray[np.float64]:
    """HJ surplus of every linear piece, checked at both of its ends."""
    widths = np.diff(grid)
    surpluses = np.empty(len(widths))
    for i, width in enumerate(widths):
        phi_dot = (phi[i + 1] - phi[i]) / width
        extra = None if starts is None else starts[i:i + 1]
        left = hj_surplus(phi_dot, gradient(phi[i], chain), chain, seed=seed, starts=extra)
        right = hj_surplus(phi_dot, gradient(phi[i + 1], chain), chain, seed=seed, starts=extra)
        surpluses[i] = max(left, right)
    return surpluses


def _zero_certificate(chain: MarkovChain) -> DualCertificate:
    phi = np.zeros((2, chain.n))
    margin = hj_surplus(np.zeros(chain.n), np.zeros((chain.n, chain.n)), chain)
    return DualCertificate(np.array([0.0, 1.0]), phi, margin, 0.0, {"repair": "none"})


def certificate_from_primal(
    report: SolveReport,
    chain: MarkovChain,
    feas_tol: float = FEAS_TOL,
    seed: int = 0,
) -> DualCertificate:
    """Dual candidate phi_k = b^2 psi_k + c_k 1 with <phi_k, p>_pi = a^2 h_k.

    The interval potentials sit at the interval midpoints and are
    extrapolated linearly to t = 0 and t = 1. An infeasible candidate is
    first lowered by a drift c(t) 1 whose slope on each piece is its
    positive surplus; if that is not enough, phi is scaled by (1 - s) with
    s found by bisection.

    Raises:
        NoPotentials: if the trajectory does not carry potentials
        NotInterior: if an interior node measure has a vanishing entry
    """
    traj = report.trajectory
    mu0, mu1 = traj.mu[0], traj.mu[-1]
    if not np.any(traj.h) and not np.any(traj.V):
        return _zero_certificate(chain)
    if traj.psi is None:
        raise NoPotentials("trajectory carries no interval potentials")
    if report.min_interior_mass <= 0:
        raise NotInterior("certificate construction needs an interior trajectory")

    a2, b2 = chain.a ** 2, chain.b ** 2
    psi = np.asarray(traj.psi)
    centers = b2 * psi + (a2 * traj.h - b2 * (psi @ (chain.pi * chain.p)))[:, None]
    steps = traj.steps
    grid = np.concatenate([[0.0], (np.arange(steps) + 0.5) / steps, [1.0]])
    phi = np.vstack([
        1.5 * centers[0] - 0.5 * centers[1],
        centers,
        1.5 * centers[-1] - 0.5 * centers[-2],
    ])
    # Primal node measures near each piece seed the surplus search.
    starts = np.vstack([mu0, traj.midpoints, mu1])
    starts = 0.5 * (starts[:-1] + starts[1:])

    surpluses = piece_surpluses(grid, phi, chain, seed, starts)
    margin = float(np.max(surpluses))
    raw_value = _dual_value(grid, phi, mu0, mu1, chain)
    repair = "none"
    logger.info(f"Certificate candidate: dual value {raw_value:.10g}, margin {margin:.3e}")

    if margin > feas_tol:
        drift = np.concatenate([[0.0], np.cumsum(np.diff(grid) * np.maximum(surpluses, 0.0))])
        phi = phi - drift[:, None]
        surpluses = piece_surpluses(grid, phi, chain, seed, starts)
        margin = float(np.max(surpluses))
        repair = "drift"
        logger.info(f"Drift repair: margin {margin:.3e}")

    scale = 1.0
    if margin > feas_tol:
        base = phi
        low, high = 0.0, 1.0
        for _ in range(SCALING_STEPS):
            s = 0.5 * (low + high)
            trial = float(np.max(piece_surpluses(grid, (1.0 - s) * base, chain, seed, starts)))
            if trial <= feas_tol:
                high = s
            else:
                low = s
        scale = 1.0 - high
        phi = scale * base
        margin = float(np.max(piece_surpluses(grid, phi, chain, seed, starts))) if scale > 0 else 0.0
        repair = "drift+scale"
        logger.warning(f"Certificate scaled by {scale:.6g} to restore feasibility")

    value = _dual_value(grid, phi, mu0, mu1, chain)
    return DualCertificate(
        grid=grid,
        phi=phi,
        feasibility_margin=margin,
        dual_value=value,
        meta={"repair": repair, "scale": scale, "candidate_value": raw_value},
    )


def duality_gap(
    mu0: ArrayLike,
    mu1: ArrayLike,
    chain: MarkovChain,
    steps: Optional[int] = None,
    opts: Optional[SolverOptions] = None,
    feas_tol: float = FEAS_TOL,
) -> GapReport:
    """Primal W^2/2 against the dual value of the certificate built from it."""
    report = distance_W(mu0, mu1, chain, steps=steps, opts=opts)
    seed = opts.seed if opts is not None else 0
    cert = certificate_from_primal(report, chain, feas_tol=feas_tol, seed=seed)
    primal = 0.5 * report.value
    dual = cert.dual_value
    if primal == 0.0:
        relative = abs(dual)
    else:
        relative = (primal - dual) / primal
    logger.info(f"Duality gap: primal {primal:.10g}, dual {dual:.10g}, relative {relative:.3e}")
    return GapReport(
        primal=primal,
        dual=dual,
        relative_gap=relative,
        feasibility_margin=cert.feasibility_margin,
        certificate=cert,
        report=report,
    )
