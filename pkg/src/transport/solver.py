"""
Convex minimization of the discrete action.

The continuity equation is eliminated in favour of the node measures: for
interior nodes mu_1 .. mu_{N-1} every interval k carries

    m_k   = (mu_k + mu_{k+1}) / 2
    rho_k = N (mu_{k+1} - mu_k)
    h_k   = <rho_k, 1>_pi
    psi_k   solving A_{m_k} psi_k = h_k p - rho_k

and the cheapest flux V_k = mobility(m_k) * grad psi_k (any other flux with
the same divergence costs more). The reduced action

    E(mu) = 1/N sum_k [a^2 h_k^2 + b^2 <grad psi_k, mobility(m_k) grad psi_k>_pi]

is convex in the node measures, with nonnegativity as plain bounds, and is
minimized by L-BFGS-B along a decreasing schedule of mobility smoothings
theta_delta(s, t) = theta(s + delta, t + delta). When the result is strictly
positive, Newton steps on the unsmoothed first-order conditions (with the
mass constraints in KKT form for ME) carry the residual down to opt_tol.
"""

import logging
from dataclasses import dataclass, field, fields
from typing import Any, Mapping, Optional, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import LinAlgError, lstsq, solve
from scipy.optimize import Bounds, minimize

from src.action.trajectory import Trajectory, trajectory_from_nodes, uniform_grid
from src.calculus.logmean import (
    log_mean_d1_unchecked, log_mean_unchecked, smoothed_log_mean, smoothed_log_mean_d1
)
from src.chain.errors import ConfigError, MassMismatch, NotConverged
from src.chain.markov import MarkovChain, as_measure, total_mass
from src.elliptic.tangent import solve_weighted_potentials


logger = logging.getLogger(__name__)

MASS_TOL = 1e-10
PENALTY_CAP = 1e12
NEWTON_MAX_ITER = 25
FD_STEP = 1e-6


@dataclass
class SolverOptions:
    """Numerical settings shared by the W, ME and D solvers."""

    steps: int = 64
    delta_schedule: Tuple[float, ...] = (1e-2, 1e-3, 1e-4, 1e-6)
    opt_tol: float = 1e-7
    accept_tol: float = 1e-4
    max_iter: int = 5000
    seed: int = 0
    init: str = "linear"
    al_tol: float = 1e-10
    al_max_outer: int = 15
    al_penalty: float = 10.0
    d_scan_points: int = 17
    golden_iterations: int = 40
    workers: int = 1

    def __post_init__(self):
        self.delta_schedule = tuple(float(d) for d in self.delta_schedule)
        if self.steps < 2:
            raise ConfigError(f"steps must be at least 2, got {self.steps}")
        if not self.delta_schedule or any(d <= 0 for d in self.delta_schedule):
            raise ConfigError("delta_schedule must be a non-empty list of positive values")
        if self.init not in ("linear", "random"):
            raise ConfigError(f"init must be 'linear' or 'random', got {self.init!r}")
        if self.d_scan_points < 3 or self.workers < 1:
            raise ConfigError("d_scan_points must be >= 3 and workers >= 1")

    @classmethod
    def from_config(cls, section: Mapping[str, Any], **overrides: Any) -> "SolverOptions":
        """Build options from a config section, ignoring unrelated keys."""
        known = {f.name for f in fields(cls)}
        values = {k: v for k, v in dict(section).items() if k in known}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass(frozen=True)
class SolveReport:
    """Outcome of a distance computation; ``value`` is the squared distance."""

    metric: str
    value: float
    distance: float
    trajectory: Trajectory
    iterations: int
    converged: bool
    speed_variation: float
    min_interior_mass: float
    residual: float = 0.0
    delta: float = 0.0
    extra: Mapping[str, Any] = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class NonlocalityDiagnostic:
    min_interior_mass: float
    min_abs_source: float
    vacuous: bool


class ReducedAction:
    """Reduced action as a function of the stacked interior node measures."""

    def __init__(self, mu0: NDArray, mu1: NDArray, chain: MarkovChain, steps: int, source_weight: float):
        self.mu0 = mu0
        self.mu1 = mu1
        self.chain = chain
        self.steps = steps
        self.a2 = source_weight ** 2
        self.b2 = chain.b ** 2
        self._weight_p = chain.pi * chain.p

    @property
    def size(self) -> int:
        return (self.steps - 1) * self.chain.n

    def nodes(self, x: ArrayLike) -> NDArray[np.float64]:
        interior = np.asarray(x, dtype=float).reshape(self.steps - 1, self.chain.n)
        return np.vstack([self.mu0, interior, self.mu1])

    def _mobility(self, mid: NDArray, delta: float) -> Tuple[NDArray, NDArray]:
        s, t = mid[:, :, None], mid[:, None, :]
        if delta > 0:
            return smoothed_log_mean(s, t, delta), smoothed_log_mean_d1(s, t, delta)
        return log_mean_unchecked(s, t), log_mean_d1_unchecked(s, t)

    def interval_state(self, x: ArrayLike, delta: float):
        """Per-interval (h, psi, theta, d1theta, cost) at the node vector x."""
        chain = self.chain
        nodes = self.nodes(x)
        mid = 0.5 * (nodes[:-1] + nodes[1:])
        rho = self.steps * np.diff(nodes, axis=0)
        h = rho @ chain.pi
        nu = h[:, None] * chain.p[None, :] - rho
        theta, d1 = self._mobility(mid, delta)
        weights = theta * chain.conductance
        psi, _ = solve_weighted_potentials(weights, chain.pi, nu)
        grad = psi[:, None, :] - psi[:, :, None]
        kinetic = 0.5 * np.sum(weights * grad ** 2, axis=(1, 2))
        cost = self.a2 * h ** 2 + self.b2 * kinetic
        return h, psi, grad, d1, cost

    def evaluate(self, x: ArrayLike, delta: float) -> Tuple[float, NDArray[np.float64]]:
        """Objective value and gradient with respect to the interior nodes."""
        chain = self.chain
        h, psi, grad, d1, cost = self.interval_state(x, delta)
        value = float(np.sum(cost) / self.steps)

        # phi_k is the derivative of the interval cost in rho_k, per unit pi.
        phi = self.b2 * psi + (self.a2 * h - self.b2 * (psi @ self._weight_p))[:, None]
        kappa = np.sum(grad ** 2 * d1 * chain.K, axis=2)
        node_grad = 2.0 * (phi[:-1] - phi[1:]) - (self.b2 / (2.0 * self.steps)) * (kappa[:-1] + kappa[1:])
        return value, (chain.pi * node_grad).ravel()

    def costs(self, x: ArrayLike, delta: float) -> NDArray[np.float64]:
        return self.interval_state(x, delta)[4]

    def potentials(self, x: ArrayLike, delta: float) -> Tuple[NDArray, NDArray]:
        """Interval sources h_k and dual potentials phi_k."""
        h, psi, _, _, _ = self.interval_state(x, delta)
        phi = self.b2 * psi + (self.a2 * h - self.b2 * (psi @ self._weight_p))[:, None]
        return h, phi

    def residual(self, x: ArrayLike, gradient: NDArray) -> float:
        """First-order residual: projected gradient per unit pi and unit time."""
        x = np.asarray(x)
        projected = np.where((x <= 0) & (gradient > 0), 0.0, gradient)
        scaled = projected.reshape(self.steps - 1, self.chain.n) / self.chain.pi * self.steps
        return float(np.max(np.abs(scaled))) if scaled.size else 0.0

    def masses(self, x: ArrayLike) -> NDArray[np.float64]:
        return np.asarray(x).reshape(self.steps - 1, self.chain.n) @ self.chain.pi


def _initial_nodes(mu0: NDArray, mu1: NDArray, steps: int, opts: SolverOptions) -> NDArray[np.float64]:
    t = uniform_grid(steps)[:, None]
    nodes = (1.0 - t) * mu0[None, :] + t * mu1[None, :]
    if opts.init == "random":
        rng = np.random.default_rng(opts.seed)
        nodes[1:-1] *= rng.lognormal(0.0, 0.25, size=nodes[1:-1].shape)
    return nodes


def _run_lbfgsb(fun, x0: NDArray, opts: SolverOptions, gtol: float):
    return minimize(
        fun,
        x0,
        jac=True,
        method="L-BFGS-B",
        bounds=Bounds(np.zeros_like(x0), np.full_like(x0, np.inf)),
        options={"maxiter": opts.max_iter, "maxcor": 20, "ftol": 1e-15, "gtol": gtol},
    )


def _block_hessian(problem: ReducedAction, x: NDArray, delta: float) -> NDArray[np.float64]:
    """Hessian of the reduced action by central differences of its gradient.

    Node j only couples to nodes j - 1 and j + 1, so every third node is
    perturbed at once and the block-tridiagonal matrix costs 6n gradients.
    """
    n = problem.chain.n
    node = np.arange(x.size) // n
    component = np.arange(x.size) % n
    typical = float(np.mean(x))
    hessian = np.zeros((x.size, x.size))
    for color in range(3):
        for s in range(n):
            columns = np.flatnonzero((node % 3 == color) & (component == s))
            if columns.size == 0:
                continue
            step = np.zeros_like(x)
            step[columns] = np.minimum(FD_STEP * np.maximum(x[columns], typical), 0.5 * x[columns])
            _, upper = problem.evaluate(x + step, delta)
            _, lower = problem.evaluate(x - step, delta)
            change = upper - lower
            for col in columns:
                rows = np.flatnonzero(np.abs(node - node[col]) <= 1)
                hessian[rows, col] = change[rows] / (2.0 * step[col])
    return 0.5 * (hessian + hessian.T)


def _newton_polish(
    problem: ReducedAction,
    x: NDArray,
    delta: float,
    opts: SolverOptions,
    constraint: Optional[Tuple[NDArray, NDArray]] = None,
    multipliers: Optional[NDArray] = None,
) -> Tuple[NDArray, float, int]:
    """Newton steps on the first-order conditions from a strictly positive x.

    ``constraint`` is a linear equality (A, b) enforced through the KKT
    system. Each step is damped to stay positive and accepted only if it
    lowers max(stationarity residual, constraint violation).
    """
    A = None if constraint is None else constraint[0]
    lam = None if A is None else (np.zeros(A.shape[0]) if multipliers is None else multipliers)

    def merit(z, duals):
        _, gradient = problem.evaluate(z, delta)
        if A is None:
            return problem.residual(z, gradient), gradient
        stationarity = problem.residual(z, gradient + A.T @ duals)
        return max(stationarity, float(np.max(np.abs(A @ z - constraint[1])))), gradient

    current, gradient = merit(x, lam)
    iterations = 0
    while current > 0.1 * opts.opt_tol and iterations < NEWTON_MAX_ITER:
        iterations += 1
        hessian = _block_hessian(problem, x, delta)
        if A is None:
            system, rhs = hessian, -gradient
        else:
            m = A.shape[0]
            system = np.block([[hessian, A.T], [A, np.zeros((m, m))]])
            rhs = np.concatenate([-gradient, constraint[1] - A @ x])
        try:
            solution = solve(system, rhs, assume_a="sym")
        except LinAlgError:
            solution = lstsq(system, rhs)[0]

        dx = solution[: x.size]
        shrinking = dx < 0
        scale = 1.0
        if np.any(shrinking):
            scale = min(1.0, 0.9 * float(np.min(x[shrinking] / -dx[shrinking])))
        accepted = False
        for _ in range(30):
            candidate = x + scale * dx
            duals = None if A is None else lam + scale * (solution[x.size:] - lam)
            value, candidate_gradient = merit(candidate, duals)
            if value < current:
                x, lam, current, gradient, accepted = candidate, duals, value, candidate_gradient, True
                break
            scale *= 0.5
        if not accepted:
            logger.debug(f"Newton polish stalled at residual {current:.2e}")
            break
    return x, current, iterations


def _motionless(mu0: NDArray, steps: int, metric: str, chain: MarkovChain) -> SolveReport:
    nodes = np.repeat(mu0[None, :], steps + 1, axis=0)
    traj = Trajectory(
        grid=uniform_grid(steps),
        mu=nodes,
        V=np.zeros((steps, chain.n, chain.n)),
        h=np.zeros(steps),
        psi=np.zeros((steps, chain.n)),
    )
    interior = float(np.min(nodes[1:-1]))
    return SolveReport(metric, 0.0, 0.0, traj, 0, True, 0.0, interior)


def _finish(
    metric: str,
    problem: ReducedAction,
    x: NDArray,
    opts: SolverOptions,
    iterations: int,
    residual: float,
    hit_cap: bool,
) -> SolveReport:
    chain = problem.chain
    nodes = problem.nodes(x)
    mid = 0.5 * (nodes[:-1] + nodes[1:])
    delta = 0.0
    if np.any(mid <= 0):
        delta = opts.delta_schedule[-1]
        logger.warning(f"{metric} minimizer touches the boundary; keeping smoothing delta={delta:.0e}")

    costs = problem.costs(x, delta)
    value = float(np.sum(costs) / problem.steps)
    traj = trajectory_from_nodes(nodes, chain, delta=delta, conservative=(metric == "ME"))
    top = float(np.max(costs))
    variation = 0.0 if top == 0.0 else (float("inf") if np.min(costs) <= 0 else top / float(np.min(costs)) - 1.0)

    converged = residual <= opts.opt_tol
    if not converged:
        if hit_cap and residual > opts.accept_tol:
            raise NotConverged(
                f"{metric} solve stopped at the iteration cap with residual {residual:.3e}"
            )
        logger.warning(f"{metric} solve ended with residual {residual:.3e} above {opts.opt_tol:.0e}")

    logger.info(
        f"{metric} solve N={problem.steps}: value={value:.10g}, iterations={iterations}, "
        f"residual={residual:.2e}, speed variation={variation:.2e}"
    )
    return SolveReport(
        metric=metric,
        value=value,
        distance=float(np.sqrt(max(value, 0.0))),
        trajectory=traj,
        iterations=iterations,
        converged=converged,
        speed_variation=variation,
        min_interior_mass=float(np.min(nodes[1:-1])),
        residual=residual,
        delta=delta,
    )


def _prepare(mu0: ArrayLike, mu1: ArrayLike, chain: MarkovChain, steps: Optional[int], opts: Optional[SolverOptions]):
    opts = opts or SolverOptions()
    steps = int(steps or opts.steps)
    if steps < 2:
        raise ConfigError(f"steps must be at least 2, got {steps}")
    return as_measure(mu0, chain), as_measure(mu1, chain), steps, opts


def distance_W(
    mu0: ArrayLike,
    mu1: ArrayLike,
    chain: MarkovChain,
    steps: Optional[int] = None,
    opts: Optional[SolverOptions] = None,
    init_nodes: Optional[ArrayLike] = None,
) -> SolveReport:
    """Squared distance W^2 between mu0 and mu1 by minimizing the discrete action.

    Raises:
        NotConverged: if the iteration cap is hit with residual above accept_tol
    """
    mu0, mu1, steps, opts = _prepare(mu0, mu1, chain, steps, opts)
    if np.array_equal(mu0, mu1):
        return _motionless(mu0, steps, "W", chain)

    problem = ReducedAction(mu0, mu1, chain, steps, chain.a)
    start = _initial_nodes(mu0, mu1, steps, opts) if init_nodes is None else np.asarray(init_nodes, dtype=float)
    x = np.maximum(start[1:-1].ravel(), 0.0)
    schedule = opts.delta_schedule if init_nodes is None else opts.delta_schedule[-1:]
    gtol = opts.opt_tol * float(np.min(chain.pi)) / steps

    iterations, residual, hit_cap = 0, 0.0, False
    for delta in schedule:
        result = _run_lbfgsb(lambda z, d=delta: problem.evaluate(z, d), x, opts, gtol)
        x = np.maximum(result.x, 0.0)
        iterations += int(result.nit)
        _, gradient = problem.evaluate(x, delta)
        residual = problem.residual(x, gradient)
        hit_cap = result.nit >= opts.max_iter
        logger.debug(f"W stage delta={delta:.0e}: {result.nit} iterations, residual {residual:.2e}")

    if not hit_cap and np.min(x) > 0:
        x, residual, polished = _newton_polish(problem, x, 0.0, opts)
        iterations += polished

    return _finish("W", problem, x, opts, iterations, residual, hit_cap)


def distance_ME(
    mu0: ArrayLike,
    mu1: ArrayLike,
    chain: MarkovChain,
    steps: Optional[int] = None,
    opts: Optional[SolverOptions] = None,
    init_nodes: Optional[ArrayLike] = None,
) -> SolveReport:
    """Conservative (source-free) distance between equal-mass measures.

    The interior masses are held at the common endpoint mass by an
    augmented Lagrangian around the source-free reduced action.

    Raises:
        MassMismatch: if the endpoint masses differ by more than 1e-10
        NotConverged: as for :func:`distance_W`
    """
    mu0, mu1, steps, opts = _prepare(mu0, mu1, chain, steps, opts)
    mass = total_mass(mu0, chain)
    gap = abs(mass - total_mass(mu1, chain))
    if gap > MASS_TOL:
        raise MassMismatch(f"endpoint masses differ by {gap:.3e}")
    if np.array_equal(mu0, mu1):
        return _motionless(mu0, steps, "ME", chain)

    problem = ReducedAction(mu0, mu1, chain, steps, 0.0)
    start = _initial_nodes(mu0, mu1, steps, opts) if init_nodes is None else np.asarray(init_nodes, dtype=float)
    x = np.maximum(start[1:-1].ravel(), 0.0)
    schedule = opts.delta_schedule if init_nodes is None else opts.delta_schedule[-1:]
    gtol = opts.opt_tol * float(np.min(chain.pi)) / steps
    weights = np.tile(chain.pi, steps - 1)

    multipliers = np.zeros(steps - 1)
    penalty = opts.al_penalty
    iterations, residual, hit_cap = 0, 0.0, False

    def augmented(z, delta):
        value, gradient = problem.evaluate(z, delta)
        c = problem.masses(z) - mass
        value += float(multipliers @ c + 0.5 * penalty * c @ c)
        gradient = gradient + np.repeat(multipliers + penalty * c, chain.n) * weights
        return value, gradient

    for stage, delta in enumerate(schedule):
        final_stage = stage == len(schedule) - 1
        target = opts.al_tol if final_stage else max(opts.al_tol, 1e-6)
        previous = np.inf
        for outer in range(opts.al_max_outer):
            result = _run_lbfgsb(lambda z, d=delta: augmented(z, d), x, opts, gtol)
            x = np.maximum(result.x, 0.0)
            iterations += int(result.nit)
            hit_cap = result.nit >= opts.max_iter
            violation = problem.masses(x) - mass
            worst = float(np.max(np.abs(violation)))
            logger.debug(
                f"ME stage delta={delta:.0e} outer {outer}: mass violation {worst:.2e}, penalty {penalty:.0e}"
            )
            if worst <= target:
                break
            multipliers = multipliers + penalty * violation
            if worst > 0.25 * previous:
                penalty = min(10.0 * penalty, PENALTY_CAP)
            previous = worst
        else:
            logger.warning(f"ME mass constraint left at {worst:.2e} after {opts.al_max_outer} rounds")
        _, gradient = augmented(x, delta)
        residual = problem.residual(x, gradient)

    if not hit_cap and np.min(x) > 0:
        constraint = (np.kron(np.eye(steps - 1), chain.pi[None, :]), np.full(steps - 1, mass))
        duals = multipliers + penalty * (problem.masses(x) - mass)
        x, residual, polished = _newton_polish(problem, x, 0.0, opts, constraint, duals)
        iterations += polished

    # Rescale the interior nodes onto the exact mass level.
    interior = x.reshape(steps - 1, chain.n)
    masses = interior @ chain.pi
    scale = np.where(masses > 0, mass / np.where(masses > 0, masses, 1.0), 1.0)
    x = (interior * scale[:, None]).ravel()

    return _finish("ME", problem, x, opts, iterations, residual, hit_cap)


def check_nonlocality(report: SolveReport) -> NonlocalityDiagnostic:
    """Smallest interior node mass and smallest interval |h| of a solve."""
    traj = report.trajectory
    vacuous = bool(np.array_equal(traj.mu[0], traj.mu[-1]))
    return NonlocalityDiagnostic(
        min_interior_mass=float(np.min(traj.mu[1:-1])),
        min_abs_source=float(np.min(np.abs(traj.h))),
        vacuous=vacuous,
    )


def refinement_study(mu0: ArrayLike, mu1: ArrayLike, chain: MarkovChain, steps_list, opts: Optional[SolverOptions] = None):
    """Discrete W^2 on a sequence of grids, as (N, value) pairs."""
    study = []
    for steps in steps_list:
        report = distance_W(mu0, mu1, chain, steps=steps, opts=opts)
        study.append((int(steps), report.value))
    return study
