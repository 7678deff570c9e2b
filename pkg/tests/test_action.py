"""Tests for trajectories, action functionals and post-processing maps."""

import numpy as np
import pytest

from src.action.functionals import (
    action_linsq, action_quad, antisymmetrize, rearrange_source, shift_cost,
    speed_profile, speed_variation
)
from src.action.io import read_trajectory_csv, trajectory_frame, write_trajectory_csv
from src.action.trajectory import (
    Trajectory, continuity_residual, trajectory_from_nodes, uniform_grid, validate
)
from src.calculus.operators import divergence
from src.chain.errors import InvalidTrajectory, MassMismatch, NotInterior, SchemaError


def source_path(chain, mu0, h):
    """Trajectory with zero flux and the given interval source rates."""
    h = np.asarray(h, dtype=float)
    steps = h.size
    mu = np.vstack([mu0, mu0 + np.cumsum(h)[:, None] * chain.p[None, :] / steps])
    return Trajectory(uniform_grid(steps), mu, np.zeros((steps, chain.n, chain.n)), h)


def random_path(chain, rng, steps=8):
    nodes = rng.uniform(0.2, 2.0, (steps + 1, chain.n))
    return trajectory_from_nodes(nodes, chain)


class TestTrajectory:
    def test_shapes_are_checked(self, two_state):
        with pytest.raises(SchemaError):
            Trajectory(uniform_grid(2), np.ones((2, 2)), np.zeros((2, 2, 2)), np.zeros(2))
        with pytest.raises(SchemaError):
            Trajectory(uniform_grid(2), np.ones((3, 2)), np.zeros((2, 3, 3)), np.zeros(2))
        with pytest.raises(InvalidTrajectory):
            Trajectory(np.array([0.0, 0.3, 1.0]), np.ones((3, 2)), np.zeros((2, 2, 2)), np.zeros(2))

    def test_arrays_are_read_only(self, two_state):
        traj = source_path(two_state, np.ones(2), [1.0, 1.0])
        with pytest.raises(ValueError):
            traj.h[0] = 2.0

    def test_validate(self, two_state):
        traj = source_path(two_state, np.ones(2), [1.0, -1.0])
        assert continuity_residual(traj, two_state) <= 1e-15
        broken = Trajectory(traj.grid, traj.mu, traj.V, np.array([1.0, 0.0]))
        with pytest.raises(InvalidTrajectory):
            validate(broken, two_state)
        negative = source_path(two_state, np.ones(2), [-4.0, 4.0])
        with pytest.raises(InvalidTrajectory):
            validate(negative, two_state)

    def test_from_nodes_satisfies_continuity(self, random_chain, rng):
        traj = random_path(random_chain, rng)
        assert continuity_residual(traj, random_chain) <= 1e-9
        validate(traj, random_chain)

    def test_from_nodes_needs_interior_midpoints(self, two_state):
        nodes = np.array([[0.0, 1.0], [0.0, 1.0], [1.0, 1.0]])
        with pytest.raises(NotInterior):
            trajectory_from_nodes(nodes, two_state)
        smoothed = trajectory_from_nodes(nodes, two_state, delta=1e-6)
        assert smoothed.psi is None

    def test_conservative_paths(self, two_state):
        nodes = np.array([[1.0, 1.0], [1.25, 0.5], [1.5, 0.0]])
        traj = trajectory_from_nodes(nodes[:2], two_state, conservative=True)
        assert np.all(traj.h == 0.0)
        assert continuity_residual(traj, two_state) <= 1e-12
        with pytest.raises(MassMismatch):
            trajectory_from_nodes(np.array([[1.0, 1.0], [2.0, 2.0]]), two_state, conservative=True)


class TestActions:
    def test_motionless_path(self, two_state):
        traj = source_path(two_state, np.ones(2), np.zeros(4))
        assert action_quad(traj, two_state) == 0.0
        assert action_linsq(traj, two_state) == 0.0
        assert shift_cost(traj, two_state) == 0.0
        assert np.all(speed_profile(traj, two_state) == 0.0)
        assert speed_variation(traj, two_state) == 0.0

    def test_pure_source_path(self, two_state):
        c = 0.7
        traj = source_path(two_state, np.array([0.6, 0.8]), np.full(4, c))
        assert action_quad(traj, two_state) == pytest.approx(c * c, rel=1e-14)
        assert shift_cost(traj, two_state) == pytest.approx(c * c, rel=1e-14)
        np.testing.assert_allclose(speed_profile(traj, two_state), c * c, rtol=1e-14)

    def test_flux_through_empty_mass_is_infinite(self, two_state):
        V = np.zeros((1, 2, 2))
        V[0, 0, 1] = V[0, 1, 0] = 1.0
        mu = np.array([[0.0, 1.0], [0.0, 1.0]])
        traj = Trajectory(uniform_grid(1), mu, V, np.zeros(1))
        assert action_quad(traj, two_state) == np.inf

    def test_jensen_two_intervals(self, two_state):
        traj = source_path(two_state, np.ones(2), [0.0, 2.0])
        assert action_linsq(traj, two_state) == pytest.approx(1.0, rel=1e-14)
        assert action_quad(traj, two_state) == pytest.approx(2.0, rel=1e-14)

    def test_shift_cost_uses_absolute_source(self, two_state):
        traj = source_path(two_state, np.array([2.0, 2.0]), [1.0, -3.0])
        assert shift_cost(traj, two_state) == pytest.approx(4.0, rel=1e-14)
        assert action_quad(traj, two_state) == pytest.approx(5.0, rel=1e-14)

    def test_linsq_never_exceeds_quad(self, random_chain, rng):
        for _ in range(20):
            traj = random_path(random_chain, rng)
            assert action_linsq(traj, random_chain) <= action_quad(traj, random_chain) + 1e-12

    def test_constant_speed_equality(self, two_state):
        traj = source_path(two_state, np.ones(2), np.full(5, 0.3))
        assert action_linsq(traj, two_state) == pytest.approx(action_quad(traj, two_state), abs=1e-12)


class TestPostProcessing:
    def test_rearrange_hand_example(self, two_state):
        traj = source_path(two_state, np.ones(2), [-1.0, 1.0])
        front = rearrange_source(traj, two_state)
        np.testing.assert_array_equal(front.h, [1.0, -1.0])
        np.testing.assert_allclose(front.mu[1], [1.5, 1.5], atol=1e-15)
        np.testing.assert_array_equal(front.mu[0], traj.mu[0])
        np.testing.assert_array_equal(front.mu[-1], traj.mu[-1])
        assert np.all(front.mu[1] >= traj.mu[1])

    def test_rearrange_keeps_descending_sources(self, two_state):
        traj = source_path(two_state, np.ones(2), [1.0, 0.5, -1.0])
        assert rearrange_source(traj, two_state) is traj

    def test_rearrange_never_increases_action(self, random_chain, rng):
        for _ in range(100):
            traj = random_path(random_chain, rng, steps=6)
            before = action_quad(traj, random_chain)
            after = action_quad(rearrange_source(traj, random_chain), random_chain)
            assert after <= before + 1e-10

    def test_antisymmetrize(self, random_chain, rng):
        for _ in range(20):
            traj = random_path(random_chain, rng, steps=4)
            noise = rng.uniform(0, 1, (4, 3, 3))
            noise = np.where(random_chain.edges, noise + np.swapaxes(noise, 1, 2), 0.0)
            noisy = Trajectory(traj.grid, traj.mu, traj.V + noise, traj.h)
            clean = antisymmetrize(noisy, random_chain)
            diff = divergence(clean.V, random_chain) - divergence(noisy.V, random_chain)
            assert np.max(np.abs(diff)) <= 1e-14
            assert action_quad(clean, random_chain) <= action_quad(noisy, random_chain) + 1e-10

    def test_antisymmetrize_edge_cases(self, two_state):
        V = np.zeros((1, 2, 2))
        V[0, 0, 1], V[0, 1, 0] = 0.5, 0.5
        traj = Trajectory(uniform_grid(1), np.ones((2, 2)), V, np.zeros(1))
        assert np.all(antisymmetrize(traj, two_state).V == 0.0)

        V[0, 1, 0] = -0.5
        traj = Trajectory(uniform_grid(1), np.array([[1.0, 1.0], [0.9, 1.2]]), V, np.zeros(1))
        np.testing.assert_array_equal(antisymmetrize(traj, two_state).V, traj.V)


class TestTrajectoryCsv:
    def test_frame_layout(self, two_state):
        traj = trajectory_from_nodes(np.array([[0.6, 0.8], [0.8, 1.0], [1.1, 1.3]]), two_state)
        frame = trajectory_frame(traj, two_state)
        assert list(frame["row"]) == ["node", "interval", "node", "interval", "node"]
        assert {"mu_1", "mu_2", "h", "speed", "V_1_2", "V_2_1", "psi_1", "psi_2"} <= set(frame.columns)

    def test_reload(self, random_chain, rng, tmp_path):
        traj = random_path(random_chain, rng)
        path = tmp_path / "trajectory.csv"
        write_trajectory_csv(traj, random_chain, str(path))
        again = read_trajectory_csv(str(path), random_chain)
        np.testing.assert_array_equal(again.mu, traj.mu)
        np.testing.assert_array_equal(again.V, traj.V)
        np.testing.assert_array_equal(again.psi, traj.psi)

    def test_missing_columns(self, two_state, tmp_path):
        path = tmp_path / "broken.csv"
        path.write_text("row,k,t,mu_1\nnode,0,0,1\n")
        with pytest.raises(SchemaError):
            read_trajectory_csv(str(path), two_state)
