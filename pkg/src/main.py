#!/usr/bin/env python3
"""Main entry point for graphflow."""

import os
import sys
import argparse
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

# Add the repository root to the Python path
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.chain.errors import ConfigError, GraphFlowError, IoError
from src.chain.markov import MarkovChain, load_chain_file, load_measure, total_mass
from src.database.connection import init_database
from src.duality.certificate import duality_gap
from src.experiment.config import ExperimentConfig, load_config
from src.experiment.report import emit_report, write_json
from src.experiment.suite import run_suite
from src.geodesic.integrator import ray_fan
from src.geodesic.shooting import ShootingOptions, shoot
from src.transport.shift import compare_metrics, distance_D
from src.transport.solver import SolverOptions, distance_ME, distance_W


logger = logging.getLogger(__name__)

METRICS = {"W": distance_W, "ME": distance_ME, "D": distance_D}


class UsageError(Exception):
    """Bad command-line input detected after argument parsing."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def setup_logging(log_level: str = "INFO", log_file: Optional[str] = None):
    """Setup logging configuration."""
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file:
        log_dir = os.path.dirname(log_file)
        if log_dir:
            os.makedirs(log_dir, exist_ok=True)
        handlers.append(logging.FileHandler(log_file))

    logging.basicConfig(
        level=getattr(logging, log_level.upper()),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="graphflow",
        description="Unbalanced transport distances on reversible Markov chains",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python src/main.py validate --chain config/chains/two_state.yaml
  python src/main.py distance --chain config/chains/two_state.yaml --mu0 "0.6,0.8" --mu1 "1.1,1.3" --metric W
  python src/main.py rays --chain config/chains/two_state.yaml --start "0.6,0.8" --n-rays 72 --t-max 3
  python src/main.py dual --chain config/chains/two_state.yaml --mu0 a.json --mu1 b.json --steps 64
  python src/main.py suite --seed 7
        """
    )
    parser.add_argument('--config', '-c', type=str,
                        help='Path to configuration file (default: config/config.yaml)')
    parser.add_argument('--log-level', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
                        help='Set logging level (overrides config)')
    parser.add_argument('--version', action='version', version='graphflow v1.0.0')

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', type=int, help='Random seed (overrides config and GRAPHFLOW_SEED)')
    common.add_argument('--out', type=str, help='Output directory for reports')
    common.add_argument('--record', action='store_true', help='Record the run in the results database')

    chain_arg = argparse.ArgumentParser(add_help=False)
    chain_arg.add_argument('--chain', required=True, help='Chain-spec file (JSON or YAML)')

    endpoints = argparse.ArgumentParser(add_help=False)
    endpoints.add_argument('--mu0', required=True, help='Start measure: file or inline "v1,v2,..."')
    endpoints.add_argument('--mu1', required=True, help='End measure: file or inline "v1,v2,..."')
    endpoints.add_argument('--steps', type=int, help='Number of time intervals')
    endpoints.add_argument('--delta-schedule', type=float, nargs='+',
                           help='Decreasing regularization levels')

    sub = parser.add_subparsers(dest='command', parser_class=_Parser)
    sub.required = True

    validate = sub.add_parser('validate', parents=[common, chain_arg], help='Check a chain and optional measures')
    validate.add_argument('--mu0', help='Measure to validate against the chain')
    validate.add_argument('--mu1', help='Second measure to validate')

    distance = sub.add_parser('distance', parents=[common, chain_arg, endpoints], help='Compute W, ME or D')
    distance.add_argument('--metric', choices=sorted(METRICS), default='W')

    sub.add_parser('geodesic', parents=[common, chain_arg, endpoints], help='Two-point shooting geodesic')

    rays = sub.add_parser('rays', parents=[common, chain_arg], help='Geodesic ray fan from one measure')
    rays.add_argument('--start', required=True, help='Start measure: file or inline "v1,v2,..."')
    rays.add_argument('--n-rays', type=int)
    rays.add_argument('--t-max', type=float)
    rays.add_argument('--eps-bd', type=float)
    rays.add_argument('--dt-min', type=float)
    rays.add_argument('--rtol', type=float)

    sub.add_parser('dual', parents=[common, chain_arg, endpoints], help='Duality gap with a certificate')
    sub.add_parser('compare', parents=[common, chain_arg, endpoints], help='Compare W, ME and D')
    sub.add_parser('suite', parents=[common], help='Run the property and acceptance battery')
    return parser


def _read_measure(argument: str, chain: MarkovChain):
    if os.path.isfile(argument):
        try:
            with open(argument, 'r', encoding='utf-8') as f:
                argument = f.read()
        except OSError as e:
            raise IoError(f"cannot read {argument}: {e}") from e
    return load_measure(argument, chain)


def _read_chain(path: str) -> MarkovChain:
    try:
        return load_chain_file(path)
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e


def _overrides(args: argparse.Namespace) -> Dict[str, Dict[str, Any]]:
    def get(name):
        return getattr(args, name, None)

    return {
        "solver": {"steps": get('steps'), "delta_schedule": get('delta_schedule')},
        "shooting": {"steps": get('steps')},
        "rays": {
            "n_rays": get('n_rays'), "t_max": get('t_max'), "eps_bd": get('eps_bd'),
            "dt_min": get('dt_min'), "rtol": get('rtol'),
        },
    }


def _solver_options(experiment: ExperimentConfig) -> SolverOptions:
    return SolverOptions.from_config(
        {**experiment.section("solver"), **experiment.section("shift")},
        seed=experiment.seed,
    )


def run_command(args: argparse.Namespace, experiment: ExperimentConfig) -> Dict[str, Any]:
    """Execute one subcommand and return the summary printed to stdout."""
    out = experiment.output_dir
    db = init_database(experiment.config) if experiment.record else None

    if args.command == 'suite':
        summary = run_suite(experiment.section("suite"), _solver_options(experiment), experiment.seed)
        os.makedirs(out, exist_ok=True)
        write_json(summary, os.path.join(out, "suite_summary.json"))
        if db:
            db.record_suite(summary)
        return {"passed": summary["passed"], "failed": summary["failed"]}

    chain = _read_chain(args.chain)

    if args.command == 'validate':
        result: Dict[str, Any] = {"states": list(chain.states), "pi": chain.pi.tolist(), "p": chain.p.tolist()}
        for name in ('mu0', 'mu1'):
            if getattr(args, name):
                result[f"{name}_mass"] = total_mass(_read_measure(getattr(args, name), chain), chain)
        return result

    if args.command == 'rays':
        section = experiment.section("rays")
        start = _read_measure(args.start, chain)
        fan = ray_fan(
            start, chain,
            n_rays=int(section["n_rays"]), t_max=float(section["t_max"]),
            eps_bd=float(section["eps_bd"]), dt_min=float(section["dt_min"]),
            rtol=float(section["rtol"]), seed=experiment.seed,
            workers=int(section.get("workers", 1)),
        )
        paths = emit_report(fan, chain, out)
        if db:
            db.record_rays(fan, chain, start, float(section["t_max"]), artifact_dir=out)
        stops: Dict[str, int] = {}
        for ray in fan:
            stops[ray.stop_reason] = stops.get(ray.stop_reason, 0) + 1
        return {"rays": len(fan), "stop_reasons": stops, "files": len(paths)}

    mu0 = _read_measure(args.mu0, chain)
    mu1 = _read_measure(args.mu1, chain)
    opts = _solver_options(experiment)

    if args.command == 'distance':
        report = METRICS[args.metric](mu0, mu1, chain, opts=opts)
        emit_report(report, chain, out)
        if db:
            db.record_solve(report, chain, mu0, mu1, seed=experiment.seed, artifact_dir=out)
        return {"metric": report.metric, "distance": report.distance, "converged": report.converged}

    if args.command == 'geodesic':
        report = shoot(mu0, mu1, chain, ShootingOptions.from_config(experiment.section("shooting")))
        emit_report(report, chain, out, prefix="geodesic")
        if db:
            db.record_solve(report, chain, mu0, mu1, seed=experiment.seed, artifact_dir=out)
        return {"distance": report.distance, "speed_drift": report.extra.get("speed_drift")}

    if args.command == 'dual':
        gap = duality_gap(mu0, mu1, chain, opts=opts,
                          feas_tol=float(experiment.section("duality").get("feas_tol", 1e-8)))
        emit_report(gap, chain, out)
        if db:
            db.record_gap(gap, chain, artifact_dir=out)
        return {"primal": gap.primal, "dual": gap.dual, "relative_gap": gap.relative_gap}

    if args.command == 'compare':
        comparison = compare_metrics(mu0, mu1, chain, opts=opts)
        emit_report(comparison, chain, out)
        if db:
            for report in (comparison.W, comparison.D, comparison.ME):
                if report is not None:
                    db.record_solve(report, chain, mu0, mu1, seed=experiment.seed, artifact_dir=out)
        return {"ordering": comparison.ordering, "consistent": comparison.consistent}

    raise UsageError(f"unknown command {args.command}")


def main(argv: Optional[List[str]] = None) -> int:
    """Main application entry point; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"graphflow: error: {e}", file=sys.stderr)
        return 2

    try:
        config = load_config(args.config)
        logging_config = config.get("logging", {})
        setup_logging(args.log_level or logging_config.get("level", "INFO"), logging_config.get("file"))
        experiment = ExperimentConfig.build(
            config,
            _overrides(args),
            chain_path=getattr(args, 'chain', None),
            output_dir=args.out,
            seed=args.seed,
            record=args.record,
        )
    except ConfigError as e:
        print(f"graphflow: configuration error: {e}", file=sys.stderr)
        return 2

    logger.info(f"Running {args.command} (seed {experiment.seed})")
    try:
        result = run_command(args, experiment)
    except UsageError as e:
        print(f"graphflow: error: {e}", file=sys.stderr)
        return 2
    except ConfigError as e:
        print(f"graphflow: configuration error: {e}", file=sys.stderr)
        return 2
    except GraphFlowError as e:
        logger.error(f"{args.command} failed: {type(e).__name__}: {e}")
        print(f"graphflow: {type(e).__name__}: {e}", file=sys.stderr)
        return 1

    for key, value in result.items():
        print(f"{key}: {value}")
    if args.command == 'suite' and result["failed"]:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
