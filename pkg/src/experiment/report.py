"""
Deterministic report emission.

JSON documents are written with sorted keys and carry ``schema_version``;
tables go through pandas with 17 significant digits. Identical inputs give
byte-identical files.
"""

import hashlib
import json
import logging
import math
import os
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from src.action.io import write_trajectory_csv
from src.chain.errors import IoError
from src.chain.markov import MarkovChain, serialize_chain
from src.duality.certificate import DualCertificate, GapReport
from src.geodesic.integrator import RayResult
from src.transport.shift import MetricComparison
from src.transport.solver import SolveReport


logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
FLOAT_FORMAT = "%.17g"


def chain_digest(chain: MarkovChain) -> str:
    return hashlib.sha256(serialize_chain(chain).encode("utf-8")).hexdigest()[:16]


def _clean(value: Any) -> Any:
    """JSON-safe copy: arrays to lists, non-finite floats to strings."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else str(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def write_json(document: Dict[str, Any], path: str) -> str:
    document = dict(document)
    document.setdefault("schema_version", SCHEMA_VERSION)
    try:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(_clean(document), f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e
    return path


def _write_frame(frame: pd.DataFrame, path: str) -> str:
    try:
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e
    return path


def solve_summary(report: SolveReport, chain: MarkovChain) -> Dict[str, Any]:
    return {
        "kind": "solve",
        "metric": report.metric,
        "value": report.value,
        "distance": report.distance,
        "iterations": report.iterations,
        "converged": report.converged,
        "residual": report.residual,
        "speed_variation": report.speed_variation,
        "min_interior_mass": report.min_interior_mass,
        "delta": report.delta,
        "steps": report.trajectory.steps,
        "chain_digest": chain_digest(chain),
        "meta": dict(report.trajectory.meta),
    }


def ray_frame(ray: RayResult, chain: MarkovChain) -> pd.DataFrame:
    xs, ys = ray.edges
    frame = pd.DataFrame(ray.mu, columns=[f"mu_{s}" for s in chain.states])
    frame.insert(0, "t", ray.times)
    frame["h"] = ray.h
    for j, (x, y) in enumerate(zip(xs, ys)):
        frame[f"gradpsi_{chain.states[x]}_{chain.states[y]}"] = ray.momenta[:, j]
    frame["speed"] = ray.speed
    return frame


def certificate_frame(cert: DualCertificate, chain: MarkovChain) -> pd.DataFrame:
    frame = pd.DataFrame(cert.phi, columns=[f"phi_{s}" for s in chain.states])
    frame.insert(0, "t", cert.grid)
    return frame


def emit_report(
    results: Any,
    chain: MarkovChain,
    output_dir: str,
    prefix: Optional[str] = None,
) -> List[str]:
    """Write the artifacts of a solver result and return their paths.

    Accepts a SolveReport, a list of RayResult, a GapReport or a
    MetricComparison.
    """
    try:
        os.makedirs(output_dir, exist_ok=True)
    except OSError as e:
        raise IoError(f"cannot create output directory {output_dir}: {e}") from e
    written: List[str] = []

    if isinstance(results, SolveReport):
        stem = os.path.join(output_dir, prefix or f"distance_{results.metric}")
        csv_path = f"{stem}_trajectory.csv"
        write_trajectory_csv(results.trajectory, chain, csv_path)
        summary = solve_summary(results, chain)
        summary["trajectory_csv"] = os.path.basename(csv_path)
        written += [csv_path, write_json(summary, f"{stem}.json")]

    elif isinstance(results, GapReport):
        stem = os.path.join(output_dir, prefix or "dual")
        csv_path = _write_frame(certificate_frame(results.certificate, chain), f"{stem}_certificate.csv")
        document = {
            "kind": "duality_gap",
            "primal": results.primal,
            "dual": results.dual,
            "relative_gap": results.relative_gap,
            "feasibility_margin": results.feasibility_margin,
            "repair": results.certificate.meta,
            "solve": solve_summary(results.report, chain),
            "certificate_csv": os.path.basename(csv_path),
        }
        written += [csv_path, write_json(document, f"{stem}.json")]

    elif isinstance(results, MetricComparison):
        stem = os.path.join(output_dir, prefix or "compare")
        document = {
            "kind": "comparison",
            "ordering": results.ordering,
            "consistent": results.consistent,
            "W": solve_summary(results.W, chain),
            "D": solve_summary(results.D, chain),
            "ME": solve_summary(results.ME, chain) if results.ME is not None else None,
        }
        written.append(write_json(document, f"{stem}.json"))

    elif isinstance(results, Sequence) and all(isinstance(r, RayResult) for r in results):
        stem = prefix or "rays"
        rays = []
        for k, ray in enumerate(results):
            name = f"{stem}_{k:03d}.csv"
            written.append(_write_frame(ray_frame(ray, chain), os.path.join(output_dir, name)))
            rays.append({
                "index": k,
                "csv": name,
                "stop_reason": ray.stop_reason,
                "stop_time": ray.stop_time,
                "speed_drift": ray.speed_drift,
                "steps": int(len(ray.times) - 1),
            })
        document = {"kind": "ray_fan", "chain_digest": chain_digest(chain), "rays": rays}
        written.append(write_json(document, os.path.join(output_dir, f"{stem}_manifest.json")))

    else:
        raise TypeError(f"no report format for {type(results).__name__}")

    logger.info(f"Wrote {len(written)} artifacts to {output_dir}")
    return written
