"""Database models for the graphflow results registry."""

from sqlalchemy import Column, Integer, String, DateTime, Float, Boolean, Text
from sqlalchemy.ext.declarative import declarative_base
from datetime import datetime

Base = declarative_base()


class SolveRun(Base):
    """One distance solve (W, ME or D)."""
    __tablename__ = 'solve_runs'

    id = Column(Integer, primary_key=True)
    created_at = Column(DateTime, default=datetime.utcnow, index=True)
    metric = Column(String(4), index=True)
    chain_digest = Column(String(16), index=True)
    n_states = Column(Integer)
    steps = Column(Integer)
    seed = Column(Integer)
    value = Column(Float)
    distance = Column(Float)
    iterations = Column(Integer)
    converged = Column(Boolean, default=True)
    residual = Column(Float)
    speed_variation = Column(Float)
    min_interior_mass = Column(Float)
    mu0 = Column(Text)  # JSON list
    mu1 = Column(Text)
    artifact_dir = Column(String(500))

    def __repr__(self):
        return f"<SolveRun({self.metric}, chain={self.chain_digest}, distance={self.distance})>"


class RayRun(Base):
    """A geodesic ray fan."""
    __tablename__ = 'ray_runs'

    id = Column(Integer, primary_key=True)
    created_at = Column(DateTime, default=datetime.utcnow, index=True)
    chain_digest = Column(String(16), index=True)
    n_rays = Column(Integer)
    t_max = Column(Float)
    start = Column(Text)  # JSON list
    reached_tmax = Column(Integer, default=0)
    boundary_touch = Column(Integer, default=0)
    step_underflow = Column(Integer, default=0)
    max_speed_drift = Column(Float)
    artifact_dir = Column(String(500))


class GapRun(Base):
    """A primal solve paired with its dual certificate."""
    __tablename__ = 'gap_runs'

    id = Column(Integer, primary_key=True)
    created_at = Column(DateTime, default=datetime.utcnow, index=True)
    chain_digest = Column(String(16), index=True)
    primal = Column(Float)
    dual = Column(Float)
    relative_gap = Column(Float)
    feasibility_margin = Column(Float)
    artifact_dir = Column(String(500))


class SuiteRun(Base):
    """Summary of one acceptance battery run."""
    __tablename__ = 'suite_runs'

    id = Column(Integer, primary_key=True)
    created_at = Column(DateTime, default=datetime.utcnow, index=True)
    seed = Column(Integer)
    passed = Column(Integer)
    failed = Column(Integer)
    summary = Column(Text)  # JSON document
