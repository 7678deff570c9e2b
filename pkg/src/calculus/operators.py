"""
Discrete calculus on a reversible chain.

Edge fields are dense n x n matrices in canonical form (zero wherever
K(x, y) = 0). Conventions:

    grad psi(x, y) = psi(y) - psi(x)
    (div Psi)(x)   = 1/2 sum_y (Psi(x, y) - Psi(y, x)) K(x, y)
    <F, G>_pi      = 1/2 sum_{x,y} F(x, y) G(x, y) K(x, y) pi(x)

so that <grad psi, Psi>_pi = -<psi, div Psi>_pi.
"""

import logging
from typing import Optional, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from src.chain.errors import DomainError
from src.chain.markov import EdgeField, MarkovChain, Measure
from .logmean import log_mean_unchecked


logger = logging.getLogger(__name__)


def gradient(psi: ArrayLike, chain: Optional[MarkovChain] = None) -> EdgeField:
    """Antisymmetric edge field psi(y) - psi(x), canonical for ``chain`` if given."""
    psi = np.asarray(psi, dtype=float)
    field = psi[None, :] - psi[:, None]
    if chain is not None:
        field[~chain.edges] = 0.0
    return field


def divergence(Psi: ArrayLike, chain: MarkovChain) -> NDArray[np.float64]:
    """Node vector 1/2 sum_y (Psi(x, y) - Psi(y, x)) K(x, y).

    Accepts a single field or a stack of fields with shape (..., n, n).
    """
    Psi = np.asarray(Psi, dtype=float)
    antisymmetric = Psi - np.swapaxes(Psi, -1, -2)
    return 0.5 * np.sum(antisymmetric * chain.K, axis=-1)


def pair_node(f: ArrayLike, g: ArrayLike, chain: MarkovChain) -> float:
    return float(np.sum(np.asarray(f) * np.asarray(g) * chain.pi))


def pair_edge(F: ArrayLike, G: ArrayLike, chain: MarkovChain) -> float:
    flow = chain.pi[:, None] * chain.K
    return float(0.5 * np.sum(np.asarray(F) * np.asarray(G) * flow))


def mobility(mu: ArrayLike) -> NDArray[np.float64]:
    """Symmetric matrix of logarithmic means theta(mu(x), mu(y))."""
    mu = np.asarray(mu, dtype=float)
    if np.any(mu < 0):
        raise DomainError("mobility needs a nonnegative measure")
    return log_mean_unchecked(mu[:, None], mu[None, :])


def edge_norm_sq(Psi: ArrayLike, mu: Measure, chain: MarkovChain) -> float:
    """Seminorm <Psi, mobility(mu) * Psi>_pi."""
    Psi = np.asarray(Psi, dtype=float)
    return pair_edge(Psi, mobility(mu) * Psi, chain)


def alpha(v: ArrayLike, s: ArrayLike, t: ArrayLike) -> Union[float, NDArray[np.float64]]:
    """Per-edge kinetic cost v^2/theta(s, t).

    Boundary conventions: 0 when theta and v both vanish, +inf when only
    theta does. Accepts broadcastable arrays.
    """
    v = np.asarray(v, dtype=float)
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(t < 0):
        raise DomainError("alpha needs nonnegative masses")
    v, theta = np.broadcast_arrays(v, log_mean_unchecked(s, t))
    out = np.zeros(v.shape)
    positive = theta > 0
    out[positive] = v[positive] ** 2 / theta[positive]
    out[~positive & (v != 0)] = np.inf
    return float(out) if out.ndim == 0 else out


def a_prime(mu: Measure, V: ArrayLike, chain: MarkovChain) -> float:
    """Flux kinetic term 1/2 sum alpha(V(x, y), mu(x), mu(y)) K(x, y) pi(x)."""
    mu = np.asarray(mu, dtype=float)
    V = np.asarray(V, dtype=float)
    xs, ys = np.nonzero(chain.edges)
    costs = alpha(V[xs, ys], mu[xs], mu[ys])
    weights = chain.K[xs, ys] * chain.pi[xs]
    if np.any(np.isinf(costs)):
        return float("inf")
    return float(0.5 * np.sum(costs * weights))
