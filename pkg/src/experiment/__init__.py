"""Experiment configuration, report emission and the acceptance battery."""

from .config import load_config, resolve_seed, ExperimentConfig, DEFAULT_CONFIG_PATH, SEED_ENV
from .report import (
    emit_report, write_json, solve_summary, ray_frame, certificate_frame,
    chain_digest, SCHEMA_VERSION
)
from .suite import AcceptanceSuite, CheckResult, run_suite, two_state_chain

__all__ = [
    'load_config', 'resolve_seed', 'ExperimentConfig', 'DEFAULT_CONFIG_PATH',
    'SEED_ENV', 'emit_report', 'write_json', 'solve_summary', 'ray_frame',
    'certificate_frame', 'chain_digest', 'SCHEMA_VERSION', 'AcceptanceSuite',
    'CheckResult', 'run_suite', 'two_state_chain'
]
