"""Database connection, session management and run recording."""

import json
import logging
import os
from collections import Counter
from contextlib import contextmanager
from typing import Any, Dict, Generator, Optional, Sequence, Union

import numpy as np
import yaml
from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker, Session
from sqlalchemy.pool import StaticPool

from src.chain.errors import ConfigError
from src.chain.markov import MarkovChain
from src.duality.certificate import GapReport
from src.experiment.report import chain_digest
from src.geodesic.integrator import BOUNDARY_TOUCH, REACHED_TMAX, STEP_UNDERFLOW, RayResult
from src.transport.solver import SolveReport
from .models import Base, SolveRun, RayRun, GapRun, SuiteRun


logger = logging.getLogger(__name__)


class DatabaseManager:
    """Manages the results registry connection and sessions."""

    def __init__(self, config: Union[str, Dict[str, Any], None] = None):
        """Accepts a config file path, a full config dict or a ``database`` section."""
        self.config = self._load_config(config)
        self.engine = self._create_engine()
        self.SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=self.engine)

    def _load_config(self, config: Union[str, Dict[str, Any], None]) -> dict:
        if isinstance(config, dict):
            return dict(config.get('database', config))

        config_path = config or os.path.join(
            os.path.dirname(__file__), '..', '..', 'config', 'config.yaml'
        )
        with open(config_path, 'r') as f:
            loaded = yaml.safe_load(f)

        return loaded['database']

    def _create_engine(self):
        db_type = self.config.get('type', 'sqlite')
        if db_type != 'sqlite':
            raise ConfigError(f"Unsupported database type: {db_type}")

        db_path = self.config.get('path', 'data/graphflow.db')
        if db_path == ':memory:':
            database_url = "sqlite://"
        else:
            db_dir = os.path.dirname(db_path)
            if db_dir:
                os.makedirs(db_dir, exist_ok=True)
            database_url = f"sqlite:///{db_path}"

        return create_engine(
            database_url,
            poolclass=StaticPool,
            connect_args={"check_same_thread": False},
            echo=False
        )

    def create_tables(self):
        Base.metadata.create_all(bind=self.engine)

    @contextmanager
    def get_session(self) -> Generator[Session, None, None]:
        """Get a database session with automatic cleanup."""
        session = self.SessionLocal()
        try:
            yield session
            session.commit()
        except Exception:
            session.rollback()
            raise
        finally:
            session.close()

    def record_solve(
        self,
        report: SolveReport,
        chain: MarkovChain,
        mu0: np.ndarray,
        mu1: np.ndarray,
        seed: int = 0,
        artifact_dir: Optional[str] = None,
    ) -> int:
        with self.get_session() as session:
            row = SolveRun(
                metric=report.metric,
                chain_digest=chain_digest(chain),
                n_states=chain.n,
                steps=report.trajectory.steps,
                seed=seed,
                value=report.value,
                distance=report.distance,
                iterations=report.iterations,
                converged=report.converged,
                residual=report.residual,
                speed_variation=report.speed_variation,
                min_interior_mass=report.min_interior_mass,
                mu0=json.dumps(np.asarray(mu0, dtype=float).tolist()),
                mu1=json.dumps(np.asarray(mu1, dtype=float).tolist()),
                artifact_dir=artifact_dir,
            )
            session.add(row)
            session.flush()
            logger.debug(f"Recorded {row}")
            return row.id

    def record_rays(
        self,
        rays: Sequence[RayResult],
        chain: MarkovChain,
        start: np.ndarray,
        t_max: float,
        artifact_dir: Optional[str] = None,
    ) -> int:
        stops = Counter(r.stop_reason for r in rays)
        with self.get_session() as session:
            row = RayRun(
                chain_digest=chain_digest(chain),
                n_rays=len(rays),
                t_max=t_max,
                start=json.dumps(np.asarray(start, dtype=float).tolist()),
                reached_tmax=stops[REACHED_TMAX],
                boundary_touch=stops[BOUNDARY_TOUCH],
                step_underflow=stops[STEP_UNDERFLOW],
                max_speed_drift=max((r.speed_drift for r in rays), default=0.0),
                artifact_dir=artifact_dir,
            )
            session.add(row)
            session.flush()
            return row.id

    def record_gap(self, gap: GapReport, chain: MarkovChain, artifact_dir: Optional[str] = None) -> int:
        with self.get_session() as session:
            row = GapRun(
                chain_digest=chain_digest(chain),
                primal=gap.primal,
                dual=gap.dual,
                relative_gap=gap.relative_gap,
                feasibility_margin=gap.feasibility_margin,
                artifact_dir=artifact_dir,
            )
            session.add(row)
            session.flush()
            return row.id

    def record_suite(self, summary: Dict[str, Any]) -> int:
        with self.get_session() as session:
            row = SuiteRun(
                seed=summary.get("seed"),
                passed=summary.get("passed"),
                failed=summary.get("failed"),
                summary=json.dumps(summary, sort_keys=True, default=str),
            )
            session.add(row)
            session.flush()
            return row.id

    def close(self):
        self.engine.dispose()


# Global database manager instance
db_manager = None


def init_database(config: Union[str, Dict[str, Any], None] = None) -> DatabaseManager:
    """Initialize the global database manager."""
    global db_manager
    db_manager = DatabaseManager(config)
    db_manager.create_tables()
    return db_manager


def get_db_session():
    """Get a database session context manager."""
    if db_manager is None:
        raise RuntimeError("Database not initialized. Call init_database() first.")

    return db_manager.get_session()
