"""
Strong geodesic system and its adaptive integration.

State: node measure mu, source momentum h and the edge momentum grad psi,
carried on the undirected edges x < y with K(x, y) > 0 (the value on the
reverse edge is the negative). With theta evaluated at (mu(x), mu(y)):

    mu'(x)           = h p(x) - sum_w grad psi(x, w) theta K(x, w)
    h'               = -(b^2 / 2a^2) sum_{x,y} grad psi(x, y)^2 d1theta(mu(x), mu(y)) K(x, y) pi(x) p(x)
    grad psi'(x, y)  = S(x)/2 - S(y)/2,  S(x) = sum_z grad psi(x, z)^2 K(x, z) d1theta(mu(x), mu(z))

The speed a^2 h^2 + b^2 ||grad psi||^2_mu is conserved along solutions.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from src.calculus.logmean import log_mean_d1_unchecked, log_mean_unchecked
from src.calculus.operators import edge_norm_sq, gradient
from src.chain.errors import BoundaryContact, BoundaryStart
from src.chain.markov import EdgeField, MarkovChain, Measure, as_measure, is_interior


logger = logging.getLogger(__name__)

SAFETY = 0.9
GROWTH_CAP = 2.0
SHRINK_FLOOR = 0.1
LOCATE_ITERATIONS = 60

REACHED_TMAX = "reached_Tmax"
BOUNDARY_TOUCH = "boundary_touch"
STEP_UNDERFLOW = "step_underflow"


@dataclass(frozen=True)
class GeodesicState:
    mu: Measure
    h: float
    grad_psi: EdgeField


class GeodesicSystem:
    """Right-hand side of the strong system on a packed state vector.

    Packed layout: [mu (n), h (1), edge momenta (E)].
    """

    def __init__(self, chain: MarkovChain):
        self.chain = chain
        self.n = chain.n
        self.xs, self.ys = chain.undirected_edges()
        self.K_xy = chain.K[self.xs, self.ys]
        self.K_yx = chain.K[self.ys, self.xs]
        self.conductance = chain.conductance[self.xs, self.ys]
        self.source_weight_x = chain.pi[self.xs] * chain.p[self.xs] * self.K_xy
        self.source_weight_y = chain.pi[self.ys] * chain.p[self.ys] * self.K_yx
        self.h_scale = chain.b ** 2 / (2.0 * chain.a ** 2)

    def pack(self, state: GeodesicState) -> NDArray[np.float64]:
        grad = np.asarray(state.grad_psi, dtype=float)
        return np.concatenate([np.asarray(state.mu, dtype=float), [float(state.h)], grad[self.xs, self.ys]])

    def unpack(self, y: NDArray) -> GeodesicState:
        grad = np.zeros((self.n, self.n))
        grad[self.xs, self.ys] = y[self.n + 1:]
        grad[self.ys, self.xs] = -y[self.n + 1:]
        return GeodesicState(mu=y[:self.n].copy(), h=float(y[self.n]), grad_psi=grad)

    def rhs(self, y: NDArray) -> NDArray[np.float64]:
        n = self.n
        mu, h, g = y[:n], y[n], y[n + 1:]
        if np.any(~(mu > 0)):
            raise BoundaryContact(f"measure left the interior (min {float(np.min(mu)):.3e})")
        mx, my = mu[self.xs], mu[self.ys]
        theta = log_mean_unchecked(mx, my)
        d1_xy = log_mean_d1_unchecked(mx, my)
        d1_yx = log_mean_d1_unchecked(my, mx)

        flow = g * theta
        mu_dot = h * self.chain.p
        mu_dot = mu_dot - np.bincount(self.xs, flow * self.K_xy, minlength=n)
        mu_dot = mu_dot + np.bincount(self.ys, flow * self.K_yx, minlength=n)

        g2 = g * g
        h_dot = -self.h_scale * float(np.sum(g2 * (d1_xy * self.source_weight_x + d1_yx * self.source_weight_y)))

        S = np.bincount(self.xs, g2 * self.K_xy * d1_xy, minlength=n)
        S = S + np.bincount(self.ys, g2 * self.K_yx * d1_yx, minlength=n)
        g_dot = 0.5 * (S[self.xs] - S[self.ys])
        return np.concatenate([mu_dot, [h_dot], g_dot])

    def speed(self, y: NDArray) -> float:
        n = self.n
        mu, h, g = y[:n], y[n], y[n + 1:]
        theta = log_mean_unchecked(mu[self.xs], mu[self.ys])
        kinetic = float(np.sum(g * g * theta * self.conductance))
        return self.chain.a ** 2 * h * h + self.chain.b ** 2 * kinetic


def geodesic_rhs(state: GeodesicState, chain: MarkovChain) -> GeodesicState:
    """Time derivative (mu', h', grad psi') of the strong system."""
    system = GeodesicSystem(chain)
    return system.unpack(system.rhs(system.pack(state)))


def geodesic_speed(state: GeodesicState, chain: MarkovChain) -> float:
    """Conserved speed a^2 h^2 + b^2 ||grad psi||^2_mu."""
    return chain.a ** 2 * state.h ** 2 + chain.b ** 2 * edge_norm_sq(state.grad_psi, state.mu, chain)


@dataclass(frozen=True)
class RayResult:
    """Accepted integration points of one geodesic ray."""

    times: NDArray[np.float64]
    mu: NDArray[np.float64]
    h: NDArray[np.float64]
    momenta: NDArray[np.float64]
    speed: NDArray[np.float64]
    stop_reason: str
    stop_time: float
    speed_drift: float
    edges: tuple = ()

    def state(self, i: int, chain: MarkovChain) -> GeodesicState:
        system = GeodesicSystem(chain)
        y = np.concatenate([self.mu[i], [self.h[i]], self.momenta[i]])
        return system.unpack(y)


def _rk4(f, y: NDArray, dt: float) -> NDArray[np.float64]:
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _doubled_step(f, y: NDArray, dt: float, rtol: float):
    """One step by step doubling; returns (extrapolated state, error ratio)."""
    full = _rk4(f, y, dt)
    half = _rk4(f, _rk4(f, y, 0.5 * dt), 0.5 * dt)
    error = float(np.max(np.abs(half - full))) / 15.0
    tolerance = rtol * dt * max(1.0, float(np.max(np.abs(y))))
    return half + (half - full) / 15.0, error / tolerance


def _next_dt(dt: float, ratio: float) -> float:
    if ratio == 0.0:
        return GROWTH_CAP * dt
    factor = SAFETY * ratio ** -0.25
    return dt * min(GROWTH_CAP, max(SHRINK_FLOOR, factor))


class _Integrator:
    def __init__(self, system: GeodesicSystem, eps_bd: float, rtol: float):
        self.system = system
        self.eps_bd = eps_bd
        self.rtol = rtol

    def attempt(self, y: NDArray, dt: float):
        """(new state, error ratio), or None if a stage left the interior."""
        try:
            y_new, ratio = _doubled_step(self.system.rhs, y, dt, self.rtol)
        except BoundaryContact:
            return None
        return y_new, ratio

    def locate_boundary(self, y: NDArray, dt: float):
        """Bisect the step length for a landing with 0 < min mu <= eps_bd."""
        n = self.system.n
        low, high = 0.0, dt
        for _ in range(LOCATE_ITERATIONS):
            mid = 0.5 * (low + high)
            outcome = self.attempt(y, mid)
            if outcome is None:
                high = mid
                continue
            y_new, ratio = outcome
            smallest = float(np.min(y_new[:n]))
            if smallest <= 0.0:
                high = mid
            elif smallest <= self.eps_bd:
                return (mid, y_new) if ratio <= 1.0 else None
            else:
                low = mid
        return None


def integrate_ray(
    init: GeodesicState,
    chain: MarkovChain,
    t_max: float = 3.0,
    eps_bd: float = 1e-6,
    dt_min: float = 5e-4,
    rtol: float = 1e-7,
    dt0: float = 1e-3,
    stops: Optional[Sequence[float]] = None,
) -> RayResult:
    """Integrate the strong system by RK4 with step-doubling control.

    Stops at ``t_max``, at the first accepted state with min mu <= eps_bd
    (located by bisection of the step) or when a rejected step would shrink
    below ``dt_min``. ``stops`` lists interior times that accepted steps
    land on exactly.
    """
    system = GeodesicSystem(chain)
    integrator = _Integrator(system, eps_bd, rtol)
    y = system.pack(init)
    if not is_interior(y[:system.n]):
        raise BoundaryStart("ray must start in the interior")

    requested = np.empty(0) if stops is None else np.asarray(stops, dtype=float).ravel()
    checkpoints = sorted(float(s) for s in requested if 0.0 < s < t_max) + [t_max]
    t, dt = 0.0, dt0
    times, states = [0.0], [y.copy()]
    reason = None
    next_stop = 0
    while reason is None:
        target = checkpoints[next_stop]
        remaining = target - t
        step = min(dt, remaining)
        outcome = integrator.attempt(y, step)
        lands_low = outcome is not None and float(np.min(outcome[0][:system.n])) <= eps_bd

        if outcome is None or lands_low:
            landing = integrator.locate_boundary(y, step)
            if landing is not None:
                tau, y = landing
                t += tau
                times.append(t)
                states.append(y.copy())
                reason = BOUNDARY_TOUCH
                break
            dt = 0.5 * step
            if dt < dt_min:
                reason = STEP_UNDERFLOW
            continue

        y_new, ratio = outcome
        if ratio > 1.0:
            dt = _next_dt(step, ratio)
            if dt < dt_min:
                reason = STEP_UNDERFLOW
            continue

        y = y_new
        if step >= remaining:
            t = target
            next_stop += 1
        else:
            t += step
        times.append(t)
        states.append(y.copy())
        if step < remaining:
            dt = _next_dt(step, ratio)
        else:
            dt = max(dt, _next_dt(step, ratio))
        if t >= t_max:
            reason = REACHED_TMAX

    states_arr = np.array(states)
    n = system.n
    speeds = np.array([system.speed(s) for s in states_arr])
    initial = speeds[0]
    drift = 0.0 if initial == 0.0 else float(np.max(np.abs(speeds - initial)) / initial)
    logger.debug(f"Ray stopped: {reason} at t={t:.6g} after {len(times) - 1} steps, drift {drift:.2e}")
    return RayResult(
        times=np.array(times),
        mu=states_arr[:, :n],
        h=states_arr[:, n],
        momenta=states_arr[:, n + 1:],
        speed=speeds,
        stop_reason=reason,
        stop_time=float(t),
        speed_drift=drift,
        edges=(tuple(int(x) for x in system.xs), tuple(int(y) for y in system.ys)),
    )


def initial_direction(start: Measure, psi: ArrayLike, h: float, chain: MarkovChain) -> GeodesicState:
    """Rescale (psi, h) to unit initial speed at ``start``."""
    grad = gradient(psi, chain)
    speed = chain.a ** 2 * h ** 2 + chain.b ** 2 * edge_norm_sq(grad, start, chain)
    scale = 1.0 / np.sqrt(speed)
    return GeodesicState(mu=np.array(start, dtype=float), h=float(h * scale), grad_psi=grad * scale)


def ray_fan(
    start: ArrayLike,
    chain: MarkovChain,
    n_rays: int = 72,
    t_max: float = 3.0,
    eps_bd: float = 1e-6,
    dt_min: float = 5e-4,
    rtol: float = 1e-7,
    seed: int = 0,
    workers: int = 1,
) -> List[RayResult]:
    """Geodesic rays in evenly spread initial directions, all of unit speed.

    On two states the directions are (psi_free, h) = (cos, sin) of the
    angles 2 pi k / n_rays with psi = (0, psi_free). On larger chains psi is
    Gaussian in the pi-weighted inner product (variance 1/pi(x) per state,
    pi-mean removed) and h is standard Gaussian; every pair is then scaled
    to unit speed.
    """
    start = as_measure(start, chain)
    if not is_interior(start):
        raise BoundaryStart(f"ray fan start must be strictly positive, got min {float(np.min(start)):.3e}")

    if chain.n == 2:
        angles = 2.0 * np.pi * np.arange(n_rays) / n_rays
        directions = [(np.array([0.0, np.cos(a)]), float(np.sin(a))) for a in angles]
    else:
        rng = np.random.default_rng(seed)
        # Isotropic in <., .>_pi on potentials; the pi-mean gauge is fixed to zero.
        potentials = rng.standard_normal((n_rays, chain.n)) / np.sqrt(chain.pi)
        potentials -= (potentials @ chain.pi)[:, None]
        sources = rng.standard_normal(n_rays)
        directions = list(zip(potentials, sources.tolist()))

    initial_states = [initial_direction(start, psi, h, chain) for psi, h in directions]

    def run(state: GeodesicState) -> RayResult:
        return integrate_ray(state, chain, t_max=t_max, eps_bd=eps_bd, dt_min=dt_min, rtol=rtol)

    logger.info(f"Integrating {n_rays} rays from {start.tolist()} (T_max={t_max}, eps_bd={eps_bd:g})")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, initial_states))
    else:
        results = [run(s) for s in initial_states]

    reasons = {r: sum(1 for x in results if x.stop_reason == r) for r in (REACHED_TMAX, BOUNDARY_TOUCH, STEP_UNDERFLOW)}
    logger.info(f"Ray stop reasons: {reasons}")
    return results
