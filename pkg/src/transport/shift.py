"""Shift-transport metric D and the metric comparison report."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Dict, Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray

from src.chain.errors import MassMismatch
from src.chain.markov import MarkovChain, as_measure, total_mass
from .solver import SolveReport, SolverOptions, distance_ME, distance_W


logger = logging.getLogger(__name__)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
ORDER_SLACK = 2e-3


class ShiftObjective:
    """F(H0) = a^2 (|H0| + |H1|)^2 + ME(mu0 + H0 p, mu1 + H1 p), H1 = H0 + m0 - m1."""

    def __init__(self, mu0: NDArray, mu1: NDArray, chain: MarkovChain, steps: int, opts: SolverOptions):
        self.mu0 = mu0
        self.mu1 = mu1
        self.chain = chain
        self.steps = steps
        self.opts = opts
        self.mass_gap = total_mass(mu0, chain) - total_mass(mu1, chain)
        self.cache: Dict[float, SolveReport] = {}
        self._warm: Optional[tuple] = None

    def feasible_interval_start(self) -> float:
        p = self.chain.p
        low0 = float(np.max(-self.mu0 / p))
        low1 = float(np.max(-self.mu1 / p)) - self.mass_gap
        return max(low0, low1)

    def endpoints(self, H0: float):
        H1 = H0 + self.mass_gap
        start = np.maximum(self.mu0 + H0 * self.chain.p, 0.0)
        end = np.maximum(self.mu1 + H1 * self.chain.p, 0.0)
        return H1, start, end

    def shift_term(self, H0: float) -> float:
        H1 = H0 + self.mass_gap
        return self.chain.a ** 2 * (abs(H0) + abs(H1)) ** 2

    def leg(self, H0: float, warm: bool = True) -> SolveReport:
        """Conservative leg between the shifted endpoints (memoized)."""
        if H0 in self.cache:
            return self.cache[H0]
        _, start, end = self.endpoints(H0)
        scale = max(1.0, float(np.max(np.abs(start))))
        if np.max(np.abs(start - end)) <= 1e-14 * scale:
            end = start
        else:
            # Equal masses up to round-off; snap them together.
            end_mass = total_mass(end, self.chain)
            if end_mass > 0:
                end = end * (total_mass(start, self.chain) / end_mass)

        init = None
        if warm and self._warm is not None:
            previous_H0, nodes = self._warm
            init = np.maximum(nodes + (H0 - previous_H0) * self.chain.p[None, :], 0.0)
            init[0], init[-1] = start, end
        report = distance_ME(start, end, self.chain, steps=self.steps, opts=self.opts, init_nodes=init)
        self.cache[H0] = report
        if warm:
            self._warm = (H0, np.array(report.trajectory.mu))
        return report

    def warm_from(self, H0: float) -> None:
        """Use the cached leg at H0 as the next warm start."""
        self._warm = (H0, np.array(self.leg(H0, warm=False).trajectory.mu))

    def __call__(self, H0: float, warm: bool = True) -> float:
        return self.shift_term(H0) + self.leg(H0, warm).value


def _golden_section(objective: ShiftObjective, low: float, high: float, iterations: int) -> float:
    tol = 1e-9 * (1.0 + abs(low) + abs(high))
    x1 = high - GOLDEN * (high - low)
    x2 = low + GOLDEN * (high - low)
    f1, f2 = objective(x1), objective(x2)
    for _ in range(iterations):
        if high - low <= tol:
            break
        if f1 <= f2:
            high, x2, f2 = x2, x1, f1
            x1 = high - GOLDEN * (high - low)
            f1 = objective(x1)
        else:
            low, x1, f1 = x1, x2, f2
            x2 = low + GOLDEN * (high - low)
            f2 = objective(x2)
    return x1 if f1 <= f2 else x2


def distance_D(
    mu0: ArrayLike,
    mu1: ArrayLike,
    chain: MarkovChain,
    steps: Optional[int] = None,
    opts: Optional[SolverOptions] = None,
) -> SolveReport:
    """Shift-transport distance: 1-D search over the shift H0 of mu0 along p.

    The optimal shifts are recorded in ``trajectory.meta`` (keys H0, H1).
    """
    opts = opts or SolverOptions()
    steps = int(steps or opts.steps)
    mu0 = as_measure(mu0, chain)
    mu1 = as_measure(mu1, chain)
    objective = ShiftObjective(mu0, mu1, chain, steps, opts)

    if np.array_equal(mu0, mu1):
        best = 0.0
    else:
        low = objective.feasible_interval_start()
        anchor = objective(low, warm=False)
        high = max(low, 0.0) + math.sqrt(anchor) / chain.a + abs(objective.mass_gap)
        grid = np.linspace(low, high, opts.d_scan_points)
        logger.info(f"D search over H0 in [{low:.6g}, {high:.6g}]")

        if opts.workers > 1:
            with ThreadPoolExecutor(max_workers=opts.workers) as pool:
                scan = list(pool.map(lambda h: objective(float(h), warm=False), grid))
        else:
            scan = [objective(float(h), warm=False) for h in grid]

        i = int(np.argmin(scan))
        bracket_low = grid[max(i - 1, 0)]
        bracket_high = grid[min(i + 1, len(grid) - 1)]
        objective.warm_from(float(grid[i]))
        best = _golden_section(objective, float(bracket_low), float(bracket_high), opts.golden_iterations)
        if scan[i] < objective(best):
            best = float(grid[i])

    leg = objective.leg(best)
    H1 = best + objective.mass_gap
    value = objective(best)
    iterations = sum(r.iterations for r in objective.cache.values())
    logger.info(f"D value {value:.10g} at H0={best:.6g}, H1={H1:.6g}")
    traj = leg.trajectory.with_meta(H0=best, H1=H1, shift_cost=objective.shift_term(best), leg_value=leg.value)
    return replace(
        leg,
        metric="D",
        value=value,
        distance=float(math.sqrt(max(value, 0.0))),
        trajectory=traj,
        iterations=iterations,
        extra={"H0": best, "H1": H1, "evaluations": len(objective.cache)},
    )


@dataclass(frozen=True)
class MetricComparison:
    """The three distances on one endpoint pair and the ordering checks."""

    W: SolveReport
    D: SolveReport
    ME: Optional[SolveReport]

    @property
    def ordering(self) -> str:
        parts = [("D", self.D.distance), ("W", self.W.distance)]
        if self.ME is not None:
            parts.append(("ME", self.ME.distance))
        parts.sort(key=lambda item: item[1])
        text = parts[0][0]
        for (_, prev), (name, value) in zip(parts, parts[1:]):
            text += (" = " if abs(value - prev) <= ORDER_SLACK else " < ") + name
        return text

    @property
    def consistent(self) -> bool:
        """D <= W (<= ME) within the discretization slack."""
        ok = self.D.distance <= self.W.distance + ORDER_SLACK
        if self.ME is not None:
            ok = ok and self.W.distance <= self.ME.distance + ORDER_SLACK
        return ok


def compare_metrics(
    mu0: ArrayLike,
    mu1: ArrayLike,
    chain: MarkovChain,
    steps: Optional[int] = None,
    opts: Optional[SolverOptions] = None,
) -> MetricComparison:
    """Run W, D and, when the masses agree, ME on the same endpoints."""
    w = distance_W(mu0, mu1, chain, steps=steps, opts=opts)
    d = distance_D(mu0, mu1, chain, steps=steps, opts=opts)
    try:
        me = distance_ME(mu0, mu1, chain, steps=steps, opts=opts)
    except MassMismatch:
        logger.info("Endpoint masses differ; skipping ME")
        me = None
    return MetricComparison(W=w, D=d, ME=me)
