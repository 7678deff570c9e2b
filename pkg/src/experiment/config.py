"""Configuration loading and experiment settings."""

import copy
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import yaml

from src.chain.errors import ConfigError


logger = logging.getLogger(__name__)

SEED_ENV = "GRAPHFLOW_SEED"

DEFAULT_CONFIG_PATH = os.path.join(
    os.path.dirname(__file__), '..', '..', 'config', 'config.yaml'
)

REQUIRED_SECTIONS = ("app", "solver", "shift", "rays", "shooting", "duality", "suite", "output", "database", "logging")


def load_config(config_path: Optional[str] = None) -> Dict[str, Any]:
    """Load the YAML configuration file."""
    path = config_path or DEFAULT_CONFIG_PATH
    try:
        with open(path, 'r') as f:
            config = yaml.safe_load(f) or {}
    except FileNotFoundError as e:
        raise ConfigError(f"configuration file not found: {path}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"configuration file does not parse: {e}") from e

    missing = [s for s in REQUIRED_SECTIONS if s not in config]
    if missing:
        raise ConfigError(f"configuration lacks sections {missing}")
    return config


def resolve_seed(config: Dict[str, Any], override: Optional[int] = None) -> int:
    """Seed precedence: command line, then GRAPHFLOW_SEED, then the config file."""
    if override is not None:
        return int(override)
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError as e:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from e
    return int(config["app"].get("seed", 0))


@dataclass
class ExperimentConfig:
    """Inputs of one CLI run: file defaults merged with command-line overrides."""

    config: Dict[str, Any]
    chain_path: Optional[str] = None
    endpoints: Dict[str, str] = field(default_factory=dict)
    output_dir: Optional[str] = None
    seed: int = 0
    record: bool = False

    @classmethod
    def build(
        cls,
        config: Dict[str, Any],
        overrides: Dict[str, Dict[str, Any]],
        chain_path: Optional[str] = None,
        endpoints: Optional[Dict[str, str]] = None,
        output_dir: Optional[str] = None,
        seed: Optional[int] = None,
        record: bool = False,
    ) -> "ExperimentConfig":
        merged = copy.deepcopy(config)
        for section, values in overrides.items():
            merged.setdefault(section, {})
            merged[section].update({k: v for k, v in values.items() if v is not None})

        if chain_path is not None and not os.path.isfile(chain_path):
            raise ConfigError(f"chain file not found: {chain_path}")
        experiment = cls(
            config=merged,
            chain_path=chain_path,
            endpoints=dict(endpoints or {}),
            output_dir=output_dir or merged["app"].get("output_dir", "results"),
            seed=resolve_seed(merged, seed),
            record=record or bool(merged["database"].get("enabled", False)),
        )
        experiment.check_ranges()
        return experiment

    def section(self, name: str) -> Dict[str, Any]:
        return dict(self.config.get(name, {}))

    def check_ranges(self) -> None:
        """Reject numeric settings outside their documented ranges."""
        solver = self.config["solver"]
        rays = self.config["rays"]
        checks = [
            (int(solver["steps"]) >= 2, "solver.steps must be >= 2"),
            (float(solver["opt_tol"]) > 0, "solver.opt_tol must be positive"),
            (all(float(d) > 0 for d in solver["delta_schedule"]), "solver.delta_schedule must be positive"),
            (int(rays["n_rays"]) >= 1, "rays.n_rays must be >= 1"),
            (float(rays["t_max"]) > 0, "rays.t_max must be positive"),
            (0 < float(rays["eps_bd"]) < 1, "rays.eps_bd must lie in (0, 1)"),
            (float(rays["dt_min"]) > 0, "rays.dt_min must be positive"),
            (float(rays["rtol"]) > 0, "rays.rtol must be positive"),
            (float(self.config["duality"]["feas_tol"]) >= 0, "duality.feas_tol must be nonnegative"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
