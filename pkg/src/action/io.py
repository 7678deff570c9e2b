"""
Trajectory CSV format.

One table, rows interleaved in time order: node row k, interval row k,
node row k+1, ... Columns:

    row         'node' or 'interval'
    k           node or interval index
    t           node time k/N, or the interval midpoint time
    mu_<x>      node measure (node rows)
    h           source rate (interval rows)
    speed       a^2 h^2 + b^2 A' (interval rows)
    V_<x>_<y>   flux on every ordered pair with K(x, y) > 0 (interval rows)
    psi_<x>     potential (interval rows, only when the trajectory has one)

Cells that do not apply to a row are empty. Floats are written with 17
significant digits so a reload is bitwise exact.
"""

import logging
from typing import List

import numpy as np
import pandas as pd

from src.chain.errors import IoError, SchemaError
from src.chain.markov import MarkovChain
from .functionals import speed_profile
from .trajectory import FILE_CE_TOL, Trajectory, uniform_grid, validate


logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def _edge_columns(chain: MarkovChain) -> List[str]:
    xs, ys = np.nonzero(chain.edges)
    return [f"V_{chain.states[x]}_{chain.states[y]}" for x, y in zip(xs, ys)]


def trajectory_frame(traj: Trajectory, chain: MarkovChain) -> pd.DataFrame:
    """Interleaved node/interval table described in the module docstring."""
    steps = traj.steps
    mu_cols = [f"mu_{s}" for s in chain.states]
    psi_cols = [f"psi_{s}" for s in chain.states] if traj.psi is not None else []
    edge_cols = _edge_columns(chain)
    xs, ys = np.nonzero(chain.edges)

    nodes = pd.DataFrame(traj.mu, columns=mu_cols)
    nodes.insert(0, "t", traj.grid)
    nodes.insert(0, "k", np.arange(steps + 1))
    nodes.insert(0, "row", "node")
    nodes["order"] = 2 * np.arange(steps + 1)

    intervals = pd.DataFrame(traj.V[:, xs, ys], columns=edge_cols)
    intervals.insert(0, "speed", speed_profile(traj, chain))
    intervals.insert(0, "h", traj.h)
    intervals.insert(0, "t", 0.5 * (traj.grid[:-1] + traj.grid[1:]))
    intervals.insert(0, "k", np.arange(steps))
    intervals.insert(0, "row", "interval")
    for j, col in enumerate(psi_cols):
        intervals[col] = traj.psi[:, j]
    intervals["order"] = 2 * np.arange(steps) + 1

    frame = pd.concat([nodes, intervals], ignore_index=True)
    frame = frame.sort_values("order").drop(columns="order").reset_index(drop=True)
    columns = ["row", "k", "t"] + mu_cols + ["h", "speed"] + edge_cols + psi_cols
    return frame[columns]


def write_trajectory_csv(traj: Trajectory, chain: MarkovChain, path: str) -> None:
    try:
        trajectory_frame(traj, chain).to_csv(path, index=False, float_format=FLOAT_FORMAT)
    except OSError as e:
        raise IoError(f"cannot write trajectory to {path}: {e}") from e
    logger.debug(f"Wrote trajectory with {traj.steps} intervals to {path}")


def read_trajectory_csv(path: str, chain: MarkovChain, ce_tol: float = FILE_CE_TOL) -> Trajectory:
    """Reload a trajectory CSV and check its invariants."""
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise IoError(f"cannot read trajectory from {path}: {e}") from e

    mu_cols = [f"mu_{s}" for s in chain.states]
    edge_cols = _edge_columns(chain)
    missing = [c for c in ["row", "k", "h"] + mu_cols + edge_cols if c not in frame.columns]
    if missing:
        raise SchemaError(f"trajectory CSV lacks columns {missing}")

    nodes = frame[frame["row"] == "node"].sort_values("k")
    intervals = frame[frame["row"] == "interval"].sort_values("k")
    steps = len(intervals)
    if len(nodes) != steps + 1:
        raise SchemaError(f"{len(nodes)} node rows for {steps} interval rows")

    xs, ys = np.nonzero(chain.edges)
    V = np.zeros((steps, chain.n, chain.n))
    V[:, xs, ys] = intervals[edge_cols].to_numpy(dtype=float)

    psi_cols = [f"psi_{s}" for s in chain.states]
    psi = None
    if all(c in frame.columns for c in psi_cols):
        values = intervals[psi_cols].to_numpy(dtype=float)
        if not np.any(np.isnan(values)):
            psi = values

    traj = Trajectory(
        grid=uniform_grid(steps),
        mu=nodes[mu_cols].to_numpy(dtype=float),
        V=V,
        h=intervals["h"].to_numpy(dtype=float),
        psi=psi,
    )
    return validate(traj, chain, ce_tol)
