"""Reversible Markov chains, measures and edge fields."""

import json
import logging
import re
from dataclasses import dataclass
from typing import Any, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import yaml
from numpy.typing import ArrayLike, NDArray
from scipy.sparse.csgraph import connected_components

from .errors import (
    BadReference, NotIrreducible, NotReversible, NotStochastic, SchemaError
)


logger = logging.getLogger(__name__)

ROW_SUM_TOL = 1e-12
STATIONARY_TOL = 1e-10
BALANCE_TOL = 1e-10
REFERENCE_TOL = 1e-10
DIRECT_SOLVE_MAX_STATES = 64

# Node vectors and n x n edge matrices are plain float arrays.
Measure = NDArray[np.float64]
EdgeField = NDArray[np.float64]


class _NumberLoader(yaml.SafeLoader):
    """Safe loader that also reads exponent floats without a dot (1e-05)."""


_NumberLoader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(
        r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
        |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
        |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
        |[-+]?\.(?:inf|Inf|INF)
        |\.(?:nan|NaN|NAN))$""",
        re.X,
    ),
    list("-+0123456789."),
)


def parse_document(text: str, what: str) -> Any:
    """JSON text first, YAML otherwise."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    try:
        return yaml.load(text, Loader=_NumberLoader)
    except yaml.YAMLError as e:
        raise SchemaError(f"{what} does not parse: {e}") from e


def _frozen(values: ArrayLike) -> NDArray[np.float64]:
    array = np.array(values, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class MarkovChain:
    """Finite reversible chain with reference direction p and costs a, b.

    Instances are built through :func:`build_chain` (or :func:`load_chain`),
    which verifies every invariant; the arrays are read-only afterwards.
    """

    states: Tuple[str, ...]
    K: NDArray[np.float64]
    pi: NDArray[np.float64]
    p: NDArray[np.float64]
    a: float = 1.0
    b: float = 1.0

    @property
    def n(self) -> int:
        return len(self.states)

    @property
    def edges(self) -> NDArray[np.bool_]:
        """Support mask K(x, y) > 0."""
        return self.K > 0

    @property
    def conductance(self) -> NDArray[np.float64]:
        """Symmetric matrix pi(x)K(x, y), explicitly symmetrized."""
        c = self.pi[:, None] * self.K
        return 0.5 * (c + c.T)

    def undirected_edges(self) -> Tuple[NDArray[np.int64], NDArray[np.int64]]:
        """Index arrays (x, y) with x < y and K(x, y) > 0."""
        xs, ys = np.nonzero(np.triu(self.edges, k=1))
        return xs, ys

    def index(self, label: str) -> int:
        return self.states.index(label)


def stationary_distribution(K: ArrayLike) -> NDArray[np.float64]:
    """Invariant distribution of an irreducible row-stochastic kernel."""
    K = np.asarray(K, dtype=float)
    n = K.shape[0]
    if not is_irreducible(K):
        raise NotIrreducible("kernel support graph is not strongly connected")

    if n <= DIRECT_SOLVE_MAX_STATES:
        system = K.T - np.eye(n)
        system[-1, :] = 1.0
        rhs = np.zeros(n)
        rhs[-1] = 1.0
        pi = np.linalg.solve(system, rhs)
    else:
        # Lazy power iteration; the lazy kernel is aperiodic.
        lazy = 0.5 * (np.eye(n) + K)
        pi = np.full(n, 1.0 / n)
        for _ in range(200000):
            update = pi @ lazy
            if np.max(np.abs(update - pi)) <= 1e-15:
                pi = update
                break
            pi = update
        else:
            logger.warning("power iteration for the stationary weight hit its cap")

    pi = np.clip(pi, 0.0, None)
    pi = pi / pi.sum()
    for _ in range(3):
        refined = pi @ K
        pi = refined / refined.sum()
    if np.any(pi <= 0):
        raise NotIrreducible("stationary weight has vanishing entries")
    return pi


def is_irreducible(K: ArrayLike) -> bool:
    support = np.asarray(K) > 0
    count, _ = connected_components(support, directed=True, connection="strong")
    return count == 1


def build_chain(
    K: ArrayLike,
    pi: Optional[ArrayLike] = None,
    p: Optional[ArrayLike] = None,
    a: float = 1.0,
    b: float = 1.0,
    states: Optional[Sequence[str]] = None,
    normalize_p: bool = False,
) -> MarkovChain:
    """Validate the data of a reversible chain and return it frozen."""
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1] or K.shape[0] < 2:
        raise SchemaError(f"K must be a square matrix with at least 2 states, got shape {K.shape}")
    n = K.shape[0]
    if states is None:
        states = [str(i + 1) for i in range(n)]
    states = tuple(str(s) for s in states)
    if len(states) != n or len(set(states)) != n:
        raise SchemaError("states must be n distinct labels")
    if not np.all(np.isfinite(K)):
        raise SchemaError("K contains non-finite entries")
    if not (a > 0 and b > 0):
        raise SchemaError(f"cost weights must be positive, got a={a}, b={b}")

    if np.any(K < 0):
        raise NotStochastic("K has negative entries")
    row_error = np.max(np.abs(K.sum(axis=1) - 1.0))
    if row_error > ROW_SUM_TOL:
        raise NotStochastic(f"row sums deviate from 1 by {row_error:.3e}")
    if not is_irreducible(K):
        raise NotIrreducible("kernel support graph is not strongly connected")

    if pi is None:
        pi = stationary_distribution(K)
    else:
        pi = np.asarray(pi, dtype=float)
        if pi.shape != (n,):
            raise SchemaError(f"pi must have {n} entries")
        if np.any(pi <= 0) or abs(pi.sum() - 1.0) > STATIONARY_TOL:
            raise SchemaError("pi must be strictly positive and sum to 1")
        residual = np.max(np.abs(pi @ K - pi))
        if residual > STATIONARY_TOL:
            raise NotReversible(f"pi is not stationary for K (residual {residual:.3e})")

    flow = pi[:, None] * K
    imbalance = np.max(np.abs(flow - flow.T))
    if imbalance > BALANCE_TOL:
        raise NotReversible(f"detailed balance fails by {imbalance:.3e}")

    p = np.ones(n) if p is None else np.asarray(p, dtype=float)
    if p.shape != (n,):
        raise SchemaError(f"p must have {n} entries")
    if np.any(~np.isfinite(p)) or np.any(p <= 0):
        raise BadReference("p must be strictly positive")
    p_mass = float(p @ pi)
    if abs(p_mass - 1.0) > REFERENCE_TOL:
        if not normalize_p:
            raise BadReference(f"<p, 1>_pi = {p_mass:.12g}, expected 1 (set normalize_p to rescale)")
        logger.info(f"Rescaling p by 1/{p_mass:.6g}")
        p = p / p_mass

    return MarkovChain(
        states=states, K=_frozen(K), pi=_frozen(pi), p=_frozen(p), a=float(a), b=float(b)
    )


def load_chain(document: Union[str, Mapping[str, Any]]) -> MarkovChain:
    """Parse a chain-spec document (JSON or YAML text, or a mapping)."""
    if isinstance(document, str):
        document = parse_document(document, "chain document")
    if not isinstance(document, Mapping):
        raise SchemaError("chain document must be an object")

    unknown = set(document) - {"states", "K", "pi", "p", "a", "b", "normalize_p"}
    if unknown:
        raise SchemaError(f"unknown keys in chain document: {sorted(unknown)}")
    for key in ("states", "K"):
        if key not in document:
            raise SchemaError(f"chain document is missing '{key}'")

    states = document["states"]
    if not isinstance(states, list) or not states:
        raise SchemaError("'states' must be a non-empty array of labels")
    n = len(states)
    K = _matrix(document["K"], n, "K")
    pi = _vector(document["pi"], n, "pi") if document.get("pi") is not None else None
    p = _vector(document["p"], n, "p") if document.get("p") is not None else None
    a = _scalar(document.get("a", 1.0), "a")
    b = _scalar(document.get("b", 1.0), "b")
    normalize_p = document.get("normalize_p", False)
    if not isinstance(normalize_p, bool):
        raise SchemaError("'normalize_p' must be a boolean")

    return build_chain(K, pi=pi, p=p, a=a, b=b, states=states, normalize_p=normalize_p)


def load_chain_file(path: str) -> MarkovChain:
    """Read and parse a chain-spec file."""
    with open(path, "r", encoding="utf-8") as f:
        return load_chain(f.read())


def serialize_chain(chain: MarkovChain) -> str:
    """JSON text that reparses to a bitwise identical chain."""
    document = {
        "states": list(chain.states),
        "K": chain.K.tolist(),
        "pi": chain.pi.tolist(),
        "p": chain.p.tolist(),
        "a": chain.a,
        "b": chain.b,
    }
    return json.dumps(document, indent=2)


def _matrix(value: Any, n: int, name: str) -> NDArray[np.float64]:
    try:
        array = np.array(value, dtype=float)
    except (TypeError, ValueError) as e:
        raise SchemaError(f"'{name}' must be a numeric array of arrays") from e
    if array.shape != (n, n):
        raise SchemaError(f"'{name}' must be {n}x{n}, got shape {array.shape}")
    return array


def _vector(value: Any, n: int, name: str) -> NDArray[np.float64]:
    try:
        array = np.array(value, dtype=float)
    except (TypeError, ValueError) as e:
        raise SchemaError(f"'{name}' must be a numeric array") from e
    if array.shape != (n,):
        raise SchemaError(f"'{name}' must have {n} entries, got shape {array.shape}")
    return array


def _scalar(value: Any, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"'{name}' must be a number")
    return float(value)


def as_measure(values: ArrayLike, chain: Optional[MarkovChain] = None) -> Measure:
    """Validated nonnegative node vector."""
    mu = np.asarray(values, dtype=float)
    if mu.ndim != 1:
        raise SchemaError("a measure is a flat vector")
    if chain is not None and mu.shape != (chain.n,):
        raise SchemaError(f"measure has {mu.size} entries, chain has {chain.n} states")
    if not np.all(np.isfinite(mu)) or np.any(mu < 0):
        raise SchemaError("measure entries must be finite and nonnegative")
    return mu


def load_measure(document: Union[str, Sequence[float], Mapping[str, float]], chain: MarkovChain) -> Measure:
    """Measure from inline "v1,v2,..." text, JSON/YAML text, an array or a label map."""
    if isinstance(document, str):
        text = document.strip()
        try:
            document = [float(v) for v in text.split(",")]
        except ValueError:
            document = parse_document(text, "measure")
    if isinstance(document, Mapping):
        missing = [s for s in chain.states if s not in document]
        if missing:
            raise SchemaError(f"measure is missing states {missing}")
        document = [document[s] for s in chain.states]
    try:
        values = np.array(document, dtype=float)
    except (TypeError, ValueError) as e:
        raise SchemaError("measure must be numeric") from e
    return as_measure(values, chain)


def total_mass(mu: ArrayLike, chain: MarkovChain) -> float:
    """l1 norm sum_x mu(x) pi(x)."""
    return float(np.asarray(mu, dtype=float) @ chain.pi)


def is_interior(mu: ArrayLike) -> bool:
    return bool(np.all(np.asarray(mu) > 0))


def min_entry(mu: ArrayLike) -> float:
    return float(np.min(mu))


def canonical(values: ArrayLike, chain: MarkovChain) -> EdgeField:
    """Representative of the edge class with zeros where K vanishes."""
    field = np.array(values, dtype=float)
    field[~chain.edges] = 0.0
    return field


def is_canonical(field: ArrayLike, chain: MarkovChain) -> bool:
    return bool(np.all(np.asarray(field)[~chain.edges] == 0.0))


def is_antisymmetric(field: ArrayLike, tol: float = 0.0) -> bool:
    field = np.asarray(field)
    return bool(np.max(np.abs(field + field.T)) <= tol)


def random_reversible_chain(
    n: int, rng: np.random.Generator, density: float = 0.6, a: float = 1.0, b: float = 1.0
) -> MarkovChain:
    """Random reversible chain built from symmetric conductances.

    A path through all states keeps the support connected; extra edges are
    added with probability ``density``.
    """
    conductance = np.zeros((n, n))
    for x in range(n - 1):
        conductance[x, x + 1] = rng.uniform(0.2, 1.0)
    for x in range(n):
        for y in range(x + 2, n):
            if rng.random() < density:
                conductance[x, y] = rng.uniform(0.2, 1.0)
    conductance = conductance + conductance.T
    conductance[np.diag_indices(n)] = rng.uniform(0.0, 0.5, size=n)
    weight = conductance.sum(axis=1)
    K = conductance / weight[:, None]
    K = K / K.sum(axis=1, keepdims=True)
    p = rng.uniform(0.5, 1.5, size=n)
    # The direct solve keeps the stationarity residual at round-off level.
    pi = stationary_distribution(K)
    return build_chain(K, pi=pi, p=p, a=a, b=b, normalize_p=True)
