"""Tests for the results registry."""

import json

import pytest

from src.chain.errors import ConfigError
from src.database import DatabaseManager, GapRun, RayRun, SolveRun, SuiteRun, get_db_session, init_database
from src.duality.certificate import duality_gap
from src.experiment.report import chain_digest
from src.geodesic.integrator import ray_fan
from src.transport.solver import distance_W


@pytest.fixture
def db():
    manager = DatabaseManager({"database": {"type": "sqlite", "path": ":memory:"}})
    manager.create_tables()
    yield manager
    manager.close()


def test_unsupported_backend():
    with pytest.raises(ConfigError):
        DatabaseManager({"type": "postgresql"})


def test_record_solve(db, two_state):
    mu0, mu1 = [0.6, 0.8], [1.1, 1.3]
    report = distance_W(mu0, mu1, two_state, steps=4)
    run_id = db.record_solve(report, two_state, mu0, mu1, seed=7, artifact_dir="results")

    with db.get_session() as session:
        row = session.get(SolveRun, run_id)
        assert row.metric == "W"
        assert row.seed == 7
        assert row.steps == 4
        assert row.chain_digest == chain_digest(two_state)
        assert row.distance == pytest.approx(0.5, abs=1e-3)
        assert json.loads(row.mu1) == mu1
        assert row.created_at is not None


def test_record_rays(db, two_state):
    rays = ray_fan([1.0, 1.0], two_state, n_rays=4, t_max=0.1)
    run_id = db.record_rays(rays, two_state, [1.0, 1.0], 0.1)

    with db.get_session() as session:
        row = session.get(RayRun, run_id)
        assert row.n_rays == 4
        assert row.reached_tmax + row.boundary_touch + row.step_underflow == 4


def test_record_gap_and_suite(db, two_state):
    gap = duality_gap([0.6, 0.8], [1.1, 1.3], two_state, steps=4)
    gap_id = db.record_gap(gap, two_state)
    suite_id = db.record_suite({"kind": "suite", "seed": 3, "passed": 7, "failed": 1, "checks": []})

    with db.get_session() as session:
        assert session.get(GapRun, gap_id).primal == pytest.approx(gap.primal)
        suite = session.get(SuiteRun, suite_id)
        assert (suite.passed, suite.failed) == (7, 1)
        assert json.loads(suite.summary)["seed"] == 3


def test_session_rolls_back_on_error(db):
    with pytest.raises(RuntimeError):
        with db.get_session() as session:
            session.add(SuiteRun(seed=1, passed=0, failed=0, summary="{}"))
            session.flush()
            raise RuntimeError("abort")

    with db.get_session() as session:
        assert session.query(SuiteRun).count() == 0


def test_global_manager(tmp_path):
    manager = init_database({"database": {"type": "sqlite", "path": str(tmp_path / "runs.db")}})
    with get_db_session() as session:
        assert session.query(SolveRun).count() == 0
    manager.close()
    assert (tmp_path / "runs.db").exists()
