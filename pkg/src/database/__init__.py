"""Database package initialization."""

from .models import Base, SolveRun, RayRun, GapRun, SuiteRun
from .connection import DatabaseManager, init_database, get_db_session

__all__ = [
    'Base', 'SolveRun', 'RayRun', 'GapRun', 'SuiteRun',
    'DatabaseManager', 'init_database', 'get_db_session'
]
