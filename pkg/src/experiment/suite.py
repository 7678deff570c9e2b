"""Property and acceptance battery behind the ``suite`` command."""

import logging
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List

import numpy as np

from src.action.functionals import action_linsq, action_quad, antisymmetrize, rearrange_source
from src.action.trajectory import Trajectory, trajectory_from_nodes
from src.calculus.logmean import log_mean, log_mean_d1, log_mean_d2
from src.calculus.operators import alpha, divergence, gradient, pair_edge, pair_node
from src.chain.errors import GraphFlowError
from src.chain.markov import MarkovChain, build_chain, random_reversible_chain, total_mass
from src.duality.certificate import certificate_from_primal, duality_gap
from src.geodesic.integrator import BOUNDARY_TOUCH, REACHED_TMAX, STEP_UNDERFLOW, ray_fan
from src.geodesic.shooting import ShootingOptions, shoot
from src.transport.shift import distance_D
from src.transport.solver import SolverOptions, check_nonlocality, distance_ME, distance_W


logger = logging.getLogger(__name__)


@dataclass
class CheckResult:
    name: str
    passed: bool
    seconds: float
    details: Dict[str, Any] = field(default_factory=dict)


def two_state_chain() -> MarkovChain:
    """K = [[0.8, 0.2], [0.4, 0.6]], pi = (2/3, 1/3), p = (1, 1), a = b = 1."""
    return build_chain([[0.8, 0.2], [0.4, 0.6]], pi=[2.0 / 3.0, 1.0 / 3.0], p=[1.0, 1.0])


def _off_span(mu0: np.ndarray, mu1: np.ndarray, chain: MarkovChain) -> float:
    """min over c of ||mu1 - mu0 - c p||_inf."""
    diff = mu1 - mu0
    ratios = diff / chain.p
    c = 0.5 * (np.max(ratios) + np.min(ratios))
    return float(np.max(np.abs(diff - c * chain.p)))


class AcceptanceSuite:
    def __init__(self, section: Dict[str, Any], opts: SolverOptions, seed: int = 0):
        self.instances = int(section.get("instances", 20))
        self.steps = int(section.get("steps", 64))
        self.state_counts = list(section.get("state_counts", [2, 3, 4]))
        self.samples = int(section.get("battery_samples", 1000))
        self.opts = opts
        self.seed = seed
        self.chain = two_state_chain()

    def checks(self) -> List[Callable[[], Dict[str, Any]]]:
        return [
            self.span_direction,
            self.ray_fans,
            self.comparisons,
            self.geodesic_space,
            self.nonlocality,
            self.inequality_battery,
            self.cross_solver,
            self.weak_duality,
        ]

    def run(self) -> List[CheckResult]:
        results = []
        for check in self.checks():
            name = check.__name__
            started = time.perf_counter()
            try:
                details = check()
                passed = bool(details.pop("passed"))
            except GraphFlowError as e:
                logger.error(f"Check {name} raised {type(e).__name__}: {e}")
                details, passed = {"error": f"{type(e).__name__}: {e}"}, False
            elapsed = time.perf_counter() - started
            logger.info(f"Check {name}: {'passed' if passed else 'FAILED'} in {elapsed:.1f}s")
            results.append(CheckResult(name, passed, elapsed, details))
        return results

    def span_direction(self) -> Dict[str, Any]:
        chain = self.chain
        mu0 = np.array([0.6, 0.8])
        mu1 = mu0 + 0.5 * chain.p
        w = distance_W(mu0, mu1, chain, steps=self.steps, opts=self.opts)
        d = distance_D(mu0, mu1, chain, steps=self.steps, opts=self.opts)
        gap = duality_gap(mu0, mu1, chain, steps=self.steps, opts=self.opts)
        passed = abs(w.distance - 0.5) <= 1e-3 and abs(d.distance - 0.5) <= 1e-3 and abs(gap.relative_gap) <= 1e-6
        return {"passed": passed, "W": w.distance, "D": d.distance, "relative_gap": gap.relative_gap}

    def ray_fans(self) -> Dict[str, Any]:
        reasons = {REACHED_TMAX, BOUNDARY_TOUCH, STEP_UNDERFLOW}
        details: Dict[str, Any] = {}
        passed = True
        for start in ([0.6, 0.8], [0.05, 1.0]):
            rays = ray_fan(start, self.chain, n_rays=72, t_max=3.0, eps_bd=1e-6, dt_min=5e-4, rtol=1e-7)
            drift = max(r.speed_drift for r in rays)
            ok = all(r.stop_reason in reasons for r in rays) and drift <= 1e-4
            passed = passed and ok and len(rays) == 72
            details[str(start)] = {"max_speed_drift": drift, "stops": sorted({r.stop_reason for r in rays})}
        details["passed"] = passed
        return details

    def comparisons(self) -> Dict[str, Any]:
        rng = np.random.default_rng(self.seed)
        failures = []
        for i in range(self.instances):
            n = self.state_counts[i % len(self.state_counts)]
            chain = random_reversible_chain(n, rng)
            mu0 = rng.uniform(0.2, 1.5, n)
            mu1 = rng.uniform(0.2, 1.5, n)
            w = distance_W(mu0, mu1, chain, steps=self.steps, opts=self.opts)
            d = distance_D(mu0, mu1, chain, steps=self.steps, opts=self.opts)
            if d.distance > w.distance + 2e-3:
                failures.append((i, "D > W"))
            if _off_span(mu0, mu1, chain) >= 0.1 and w.distance - d.distance < 1e-3:
                failures.append((i, "W - D below strict margin"))

            nu0, nu1 = mu0 / total_mass(mu0, chain), mu1 / total_mass(mu1, chain)
            wp = distance_W(nu0, nu1, chain, steps=self.steps, opts=self.opts)
            me = distance_ME(nu0, nu1, chain, steps=self.steps, opts=self.opts)
            if wp.distance > me.distance - 1e-3:
                failures.append((i, "W not below ME"))
        return {"passed": not failures, "failures": failures}

    def geodesic_space(self) -> Dict[str, Any]:
        rng = np.random.default_rng(self.seed + 1)
        failures = []
        for i in range(5):
            chain = random_reversible_chain(3, rng)
            mu0, mu1 = rng.uniform(0.2, 1.5, 3), rng.uniform(0.2, 1.5, 3)
            report = distance_W(mu0, mu1, chain, steps=self.steps, opts=self.opts)
            if report.speed_variation > 5e-2:
                failures.append((i, "speed variation", report.speed_variation))
            base = action_quad(report.trajectory, chain)
            for transform in (rearrange_source, antisymmetrize):
                after = action_quad(transform(report.trajectory, chain), chain, ce_tol=1e-6)
                if after > base + 1e-10 or after < base - 1e-6:
                    failures.append((i, transform.__name__, after - base))
        return {"passed": not failures, "failures": failures}

    def nonlocality(self) -> Dict[str, Any]:
        rng = np.random.default_rng(self.seed + 2)
        cases = [(self.chain, np.array([1.0, 0.0]), np.array([0.0, 1.0]))]
        for _ in range(5):
            chain = random_reversible_chain(3, rng)
            mu0 = np.array([rng.uniform(0.5, 1.5), 0.0, 0.0])
            mu1 = np.array([0.0, 0.0, rng.uniform(0.5, 1.5)])
            cases.append((chain, mu0, mu1))
        minima = []
        for chain, mu0, mu1 in cases:
            diagnostic = check_nonlocality(distance_W(mu0, mu1, chain, steps=self.steps, opts=self.opts))
            minima.append((diagnostic.min_interior_mass, diagnostic.min_abs_source))
        passed = all(m > 0 and h > 0 for m, h in minima)
        return {"passed": passed, "minima": minima}

    def inequality_battery(self) -> Dict[str, Any]:
        rng = np.random.default_rng(self.seed + 3)
        size = self.samples
        u, v, lam = rng.uniform(0.01, 10, size), rng.uniform(0.01, 10, size), rng.uniform(0.1, 10, size)
        theta = log_mean(u, v)
        u2, v2 = rng.uniform(0.01, 10, size), rng.uniform(0.01, 10, size)
        tangent = log_mean_d1(u, v) * u2 + log_mean_d2(u, v) * v2
        worst = {
            "symmetry": float(np.max(np.abs(theta - log_mean(v, u)))),
            "homogeneity": float(np.max(np.abs(log_mean(lam * u, lam * v) - lam * theta) / (lam * theta))),
            "monotonicity": float(np.max(theta - log_mean(u + rng.uniform(0.0, 1.0, size), v))),
            "concavity": float(np.max((log_mean(u2, v2) - tangent) / log_mean(u2, v2))),
            "euler": float(np.max(np.abs(log_mean_d1(u, v) * u + log_mean_d2(u, v) * v - theta) / theta)),
        }

        def random_points():
            z = rng.uniform(-2, 2, (size, 3))
            z[:, 1:] = np.abs(z[:, 1:]) + 0.01
            return z

        z1, z2 = random_points(), random_points()
        mid = 0.5 * (z1 + z2)
        convexity = alpha(mid[:, 0], mid[:, 1], mid[:, 2]) - 0.5 * (
            alpha(z1[:, 0], z1[:, 1], z1[:, 2]) + alpha(z2[:, 0], z2[:, 1], z2[:, 2])
        )
        worst["alpha_convexity"] = float(np.max(convexity))
        base = alpha(z1[:, 0], z1[:, 1], z1[:, 2])
        scaled = alpha(lam * z1[:, 0], lam * z1[:, 1], lam * z1[:, 2])
        worst["alpha_ray_affine"] = float(np.max(np.abs(scaled - lam * base) / np.maximum(lam * base, 1.0)))

        chain = random_reversible_chain(4, rng)
        ibp, conservation = [], []
        for _ in range(100):
            psi = rng.standard_normal(4)
            field = np.where(chain.edges, rng.standard_normal((4, 4)), 0.0)
            div = divergence(field, chain)
            ibp.append(abs(pair_edge(gradient(psi, chain), field, chain) + pair_node(psi, div, chain)))
            conservation.append(abs(float(div @ chain.pi)))
        worst["integration_by_parts"] = max(ibp)
        worst["divergence_conservation"] = max(conservation)
        worst.update(self._path_inequalities(chain, rng))

        passed = (
            worst["symmetry"] <= 1e-12 and worst["homogeneity"] <= 1e-12 and worst["euler"] <= 1e-8
            and worst["monotonicity"] <= 1e-12 and worst["concavity"] <= 1e-10
            and worst["alpha_convexity"] <= 1e-10 and worst["alpha_ray_affine"] <= 1e-12
            and worst["integration_by_parts"] <= 1e-12 and worst["divergence_conservation"] <= 1e-12
            and worst["jensen"] <= 1e-12 and worst["rearrangement"] <= 1e-10
            and worst["antisymmetrization"] <= 1e-10 and worst["antisymmetrization_divergence"] <= 1e-14
        )
        worst["passed"] = passed
        return worst

    def _path_inequalities(self, chain: MarkovChain, rng: np.random.Generator) -> Dict[str, float]:
        """Jensen ordering and the two post-processing maps on random feasible paths."""
        jensen, rearranged, symmetrized, drift = [], [], [], []
        for _ in range(20):
            nodes = rng.uniform(0.5, 1.5, (9, chain.n))
            traj = trajectory_from_nodes(nodes, chain)
            quad = action_quad(traj, chain)
            jensen.append((action_linsq(traj, chain) - quad) / quad)
            after = action_quad(rearrange_source(traj, chain), chain, ce_tol=1e-6)
            rearranged.append((after - quad) / quad)

            symmetric = rng.uniform(0.0, 1.0, traj.V.shape)
            symmetric = np.where(chain.edges, symmetric + np.swapaxes(symmetric, -1, -2), 0.0)
            loaded = Trajectory(traj.grid, traj.mu, traj.V + symmetric, traj.h, None)
            cleaned = antisymmetrize(loaded, chain)
            symmetrized.append(
                (action_quad(cleaned, chain, ce_tol=1e-6) - action_quad(loaded, chain, ce_tol=1e-6)) / quad
            )
            drift.append(float(np.max(np.abs(divergence(cleaned.V, chain) - divergence(loaded.V, chain)))))
        return {
            "jensen": max(jensen),
            "rearrangement": max(rearranged),
            "antisymmetrization": max(symmetrized),
            "antisymmetrization_divergence": max(drift),
        }

    def cross_solver(self) -> Dict[str, Any]:
        rng = np.random.default_rng(self.seed + 4)
        deviations = []
        for _ in range(5):
            mu0, mu1 = rng.uniform(0.3, 1.5, 2), rng.uniform(0.3, 1.5, 2)
            shot = shoot(mu0, mu1, self.chain, ShootingOptions(steps=self.steps))
            convex = distance_W(mu0, mu1, self.chain, steps=128, opts=self.opts)
            deviations.append(abs(shot.value - convex.value) / max(convex.value, 1e-12))
        return {"passed": max(deviations) <= 1e-2, "relative_deviation": deviations}

    def weak_duality(self) -> Dict[str, Any]:
        rng = np.random.default_rng(self.seed + 5)
        failures, gaps = [], []
        for i in range(5):
            chain = random_reversible_chain(3, rng)
            mu0, mu1 = rng.uniform(0.3, 1.5, 3), rng.uniform(0.3, 1.5, 3)
            report = distance_W(mu0, mu1, chain, steps=self.steps, opts=self.opts)
            cert = certificate_from_primal(report, chain, seed=self.seed)
            gap = (0.5 * report.value - cert.dual_value) / (0.5 * report.value)
            gaps.append(gap)
            if cert.feasible and cert.dual_value > 0.5 * report.value + 2e-3:
                failures.append((i, "dual above primal"))
            if gap > 5e-2:
                failures.append((i, "gap above 5%"))
        return {"passed": not failures, "failures": failures, "relative_gaps": gaps}


def run_suite(section: Dict[str, Any], opts: SolverOptions, seed: int = 0) -> Dict[str, Any]:
    """Run every check and return the machine-readable summary."""
    results = AcceptanceSuite(section, opts, seed).run()
    passed = sum(r.passed for r in results)
    return {
        "kind": "suite",
        "seed": seed,
        "passed": passed,
        "failed": len(results) - passed,
        "checks": [
            {"name": r.name, "passed": r.passed, "seconds": round(r.seconds, 3), "details": r.details}
            for r in results
        ],
    }
