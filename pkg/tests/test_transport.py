"""Tests for the W, ME and D solvers."""

import numpy as np
import pytest

from src.action.functionals import action_quad, antisymmetrize, rearrange_source
from src.action.trajectory import continuity_residual
from src.chain.errors import ConfigError, MassMismatch, NotConverged
from src.chain.markov import random_reversible_chain, total_mass
from src.transport.shift import ShiftObjective, compare_metrics, distance_D
from src.transport.solver import (
    ReducedAction, SolverOptions, check_nonlocality, distance_ME, distance_W,
    refinement_study
)


SPAN_START = np.array([0.6, 0.8])
SPAN_END = np.array([1.1, 1.3])
OFF_SPAN_END = np.array([1.0, 0.5])


class TestSolverOptions:
    def test_defaults(self):
        opts = SolverOptions()
        assert opts.steps == 64
        assert opts.delta_schedule == (1e-2, 1e-3, 1e-4, 1e-6)

    def test_from_config_ignores_unrelated_keys(self):
        opts = SolverOptions.from_config({"steps": 16, "workers": 2, "color": "red"}, seed=5)
        assert opts.steps == 16 and opts.workers == 2 and opts.seed == 5

    @pytest.mark.parametrize("kwargs", [
        {"steps": 1},
        {"delta_schedule": []},
        {"delta_schedule": [1e-3, -1.0]},
        {"init": "zeros"},
        {"d_scan_points": 2},
    ])
    def test_invalid_options(self, kwargs):
        with pytest.raises(ConfigError):
            SolverOptions(**kwargs)


class TestReducedAction:
    def test_gradient_matches_finite_differences(self, random_chain, rng):
        mu0, mu1 = rng.uniform(0.3, 1.5, 3), rng.uniform(0.3, 1.5, 3)
        problem = ReducedAction(mu0, mu1, random_chain, 4, random_chain.a)
        x = rng.uniform(0.3, 1.5, problem.size)
        for delta in (0.0, 1e-3):
            _, grad = problem.evaluate(x, delta)
            eps = 1e-6
            fd = np.empty_like(x)
            for i in range(x.size):
                step = np.zeros_like(x)
                step[i] = eps
                fd[i] = (problem.evaluate(x + step, delta)[0] - problem.evaluate(x - step, delta)[0]) / (2 * eps)
            np.testing.assert_allclose(grad, fd, rtol=1e-5, atol=1e-7)

    def test_value_equals_trajectory_action(self, random_chain, rng):
        mu0, mu1 = rng.uniform(0.3, 1.5, 3), rng.uniform(0.3, 1.5, 3)
        report = distance_W(mu0, mu1, random_chain, steps=8)
        assert action_quad(report.trajectory, random_chain) == pytest.approx(report.value, rel=1e-10)


class TestDistanceW:
    def test_identical_endpoints(self, two_state):
        report = distance_W(SPAN_START, SPAN_START, two_state, steps=16)
        assert report.value == 0.0 and report.distance == 0.0
        assert np.all(report.trajectory.V == 0.0) and np.all(report.trajectory.h == 0.0)
        assert check_nonlocality(report).vacuous

    def test_span_direction(self, two_state):
        report = distance_W(SPAN_START, SPAN_END, two_state, steps=16)
        assert report.distance == pytest.approx(0.5, abs=1e-3)
        assert report.converged
        np.testing.assert_allclose(report.trajectory.h, 0.5, atol=1e-6)
        assert check_nonlocality(report).min_abs_source == pytest.approx(0.5, abs=1e-6)

    def test_trajectory_is_feasible(self, random_chain, rng):
        mu0, mu1 = rng.uniform(0.3, 1.5, 3), rng.uniform(0.3, 1.5, 3)
        report = distance_W(mu0, mu1, random_chain, steps=16)
        traj = report.trajectory
        np.testing.assert_array_equal(traj.mu[0], mu0)
        np.testing.assert_array_equal(traj.mu[-1], mu1)
        assert continuity_residual(traj, random_chain) <= 1e-9

    def test_interior_mass_between_boundary_endpoints(self, two_state):
        report = distance_W([1.0, 0.0], [0.0, 1.0], two_state, steps=16)
        assert check_nonlocality(report).min_interior_mass > 0.0

    def test_iteration_cap(self, two_state):
        opts = SolverOptions(max_iter=1, accept_tol=1e-30, delta_schedule=[1e-6])
        with pytest.raises(NotConverged):
            distance_W([0.5, 1.0], [1.0, 0.4], two_state, steps=16, opts=opts)

    def test_refinement_study(self, two_state):
        study = refinement_study(SPAN_START, SPAN_END, two_state, [4, 8])
        assert [n for n, _ in study] == [4, 8]
        for _, value in study:
            assert value == pytest.approx(0.25, abs=1e-8)

    def test_deterministic(self, random_chain, rng):
        mu0, mu1 = rng.uniform(0.3, 1.5, 3), rng.uniform(0.3, 1.5, 3)
        first = distance_W(mu0, mu1, random_chain, steps=8)
        second = distance_W(mu0, mu1, random_chain, steps=8)
        assert first.value == second.value
        np.testing.assert_array_equal(first.trajectory.mu, second.trajectory.mu)

    def test_off_span_solve_reaches_tolerance(self, two_state):
        report = distance_W(SPAN_START, OFF_SPAN_END, two_state, steps=16)
        assert report.converged
        assert report.residual <= SolverOptions().opt_tol
        assert report.delta == 0.0

    @pytest.mark.slow
    def test_off_span_solve_reaches_tolerance_full_resolution(self, two_state):
        report = distance_W(SPAN_START, OFF_SPAN_END, two_state, steps=64)
        assert report.converged
        assert report.residual <= SolverOptions().opt_tol

    def test_source_never_vanishes_between_vertices(self, two_state):
        report = distance_W([1.0, 0.0], [0.0, 1.0], two_state, steps=16)
        diagnostic = check_nonlocality(report)
        assert not diagnostic.vacuous
        assert diagnostic.min_abs_source > 0.0

    def test_symmetric_in_endpoints(self, two_state):
        forward = distance_W(SPAN_START, OFF_SPAN_END, two_state, steps=16)
        backward = distance_W(OFF_SPAN_END, SPAN_START, two_state, steps=16)
        assert forward.value == pytest.approx(backward.value, rel=1e-7)
        np.testing.assert_allclose(forward.trajectory.mu, backward.trajectory.mu[::-1], atol=1e-5)

    def test_triangle_inequality(self, two_state):
        points = [SPAN_START, OFF_SPAN_END, np.array([0.3, 1.4])]
        d = {
            (i, j): distance_W(points[i], points[j], two_state, steps=16).distance
            for i in range(3) for j in range(3) if i < j
        }
        assert d[0, 2] <= d[0, 1] + d[1, 2] + 1e-6
        assert d[0, 1] <= d[0, 2] + d[1, 2] + 1e-6
        assert d[1, 2] <= d[0, 1] + d[0, 2] + 1e-6

    def test_refinement_settles_off_span(self, two_state):
        study = refinement_study(SPAN_START, OFF_SPAN_END, two_state, [8, 16, 32])
        values = [value for _, value in study]
        assert abs(values[2] - values[1]) <= abs(values[1] - values[0])

    def test_minimizer_is_closed_under_post_processing(self, two_state):
        report = distance_W(SPAN_START, OFF_SPAN_END, two_state, steps=16)
        assert report.converged
        rearranged = rearrange_source(report.trajectory, two_state)
        assert action_quad(rearranged, two_state) >= report.value - 1e-8
        symmetric = antisymmetrize(report.trajectory, two_state)
        assert action_quad(symmetric, two_state) == pytest.approx(report.value, rel=1e-10)

    @pytest.mark.slow
    def test_span_direction_full_resolution(self, two_state):
        report = distance_W(SPAN_START, SPAN_END, two_state, steps=64)
        assert report.distance == pytest.approx(0.5, abs=1e-3)

    @pytest.mark.slow
    def test_constant_speed(self, rng):
        for _ in range(3):
            chain = random_reversible_chain(3, rng)
            report = distance_W(rng.uniform(0.2, 1.5, 3), rng.uniform(0.2, 1.5, 3), chain, steps=64)
            assert report.speed_variation <= 5e-2

    @pytest.mark.slow
    def test_random_start_agrees(self, random_chain, rng):
        mu0, mu1 = rng.uniform(0.3, 1.5, 3), rng.uniform(0.3, 1.5, 3)
        linear = distance_W(mu0, mu1, random_chain, steps=32)
        shaken = distance_W(mu0, mu1, random_chain, steps=32, opts=SolverOptions(init="random", seed=3))
        assert shaken.value == pytest.approx(linear.value, rel=1e-4)


class TestDistanceME:
    def test_mass_mismatch(self, two_state):
        with pytest.raises(MassMismatch):
            distance_ME(SPAN_START, SPAN_END, two_state, steps=8)

    def test_identical_endpoints(self, two_state):
        assert distance_ME(SPAN_START, SPAN_START, two_state, steps=8).value == 0.0

    def test_conserves_mass(self, two_state):
        mu0, mu1 = np.array([1.2, 0.6]), np.array([0.6, 1.8])
        report = distance_ME(mu0, mu1, two_state, steps=16)
        masses = report.trajectory.mu @ two_state.pi
        np.testing.assert_allclose(masses, 1.0, atol=1e-10)
        assert np.all(report.trajectory.h == 0.0)

    def test_source_shortens_probability_paths(self, two_state):
        mu0, mu1 = np.array([1.2, 0.6]), np.array([0.6, 1.8])
        assert total_mass(mu0, two_state) == pytest.approx(total_mass(mu1, two_state))
        w = distance_W(mu0, mu1, two_state, steps=16)
        me = distance_ME(mu0, mu1, two_state, steps=16)
        assert w.distance < me.distance - 1e-3

    def test_reaches_tolerance(self, two_state):
        report = distance_ME([1.2, 0.6], [0.6, 1.8], two_state, steps=16)
        assert report.converged
        assert report.residual <= SolverOptions().opt_tol


class TestDistanceD:
    def test_span_direction(self, two_state):
        report = distance_D(SPAN_START, SPAN_END, two_state, steps=8)
        assert report.metric == "D"
        assert report.distance == pytest.approx(0.5, abs=1e-3)
        assert 0.0 - 1e-6 <= report.extra["H0"] <= 0.5 + 1e-6
        assert report.extra["H1"] == pytest.approx(report.extra["H0"] - 0.5)

    def test_identical_endpoints(self, two_state):
        report = distance_D(SPAN_START, SPAN_START, two_state, steps=8)
        assert report.value == 0.0
        assert report.extra["H0"] == 0.0 and report.extra["H1"] == 0.0

    def test_shift_objective(self, two_state):
        objective = ShiftObjective(SPAN_START, SPAN_END, two_state, 8, SolverOptions())
        assert objective.feasible_interval_start() == pytest.approx(-0.6)
        assert objective.shift_term(0.25) == pytest.approx(0.25)
        assert objective(0.25) == pytest.approx(0.25)
        assert 0.25 in objective.cache

    @pytest.mark.slow
    def test_ordering_on_random_instances(self, rng):
        for _ in range(3):
            chain = random_reversible_chain(3, rng)
            mu0, mu1 = rng.uniform(0.2, 1.5, 3), rng.uniform(0.2, 1.5, 3)
            nu0 = mu0 / total_mass(mu0, chain)
            nu1 = mu1 / total_mass(mu1, chain)
            comparison = compare_metrics(nu0, nu1, chain, steps=32)
            assert comparison.ME is not None
            assert comparison.consistent
            assert comparison.D.distance <= comparison.W.distance + 2e-3

    @pytest.mark.slow
    def test_strict_gap_off_span(self, two_state):
        mu0, mu1 = np.array([1.0, 0.3]), np.array([0.4, 1.2])
        w = distance_W(mu0, mu1, two_state, steps=64)
        d = distance_D(mu0, mu1, two_state, steps=64)
        assert d.distance <= w.distance - 1e-3

    def test_comparison_without_me(self, two_state):
        comparison = compare_metrics(SPAN_START, SPAN_END, two_state, steps=8)
        assert comparison.ME is None
        assert comparison.ordering in ("D = W", "W = D")
        assert comparison.consistent
