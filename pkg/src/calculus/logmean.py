"""Logarithmic mean and its partial derivatives.

All functions accept scalars or broadcastable arrays and return a float for
scalar input. The ``_unchecked`` variants skip domain validation and are
used on hot paths (solver objective, geodesic right-hand side).
"""

from typing import Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from src.chain.errors import DomainError


# Relative gap below which the diagonal series replaces the closed form.
DIAGONAL_REL = 1e-9
D1_SERIES_REL = 1e-5

Real = Union[float, NDArray[np.float64]]


def _as_result(values: NDArray[np.float64]) -> Real:
    return float(values) if values.ndim == 0 else values


def log_mean_unchecked(u: ArrayLike, v: ArrayLike) -> NDArray[np.float64]:
    u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
    out = np.zeros(u.shape)
    positive = (u > 0) & (v > 0)
    diff = u - v
    largest = np.maximum(u, v)
    near = positive & (np.abs(diff) <= DIAGONAL_REL * largest)
    # log1p is accurate when u/v is moderate; plain logs otherwise.
    moderate = positive & ~near & (np.abs(diff) <= 0.5 * largest)
    wide = positive & ~near & ~moderate

    if np.any(near):
        s = u[near] + v[near]
        delta = diff[near] / (0.5 * s)
        out[near] = 0.5 * s * (1.0 - delta * delta / 12.0)
    if np.any(moderate):
        out[moderate] = diff[moderate] / np.log1p(diff[moderate] / v[moderate])
    if np.any(wide):
        out[wide] = diff[wide] / (np.log(u[wide]) - np.log(v[wide]))
    return out


def log_mean_d1_unchecked(u: ArrayLike, v: ArrayLike) -> NDArray[np.float64]:
    u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
    x = (u - v) / v
    out = np.empty(u.shape)
    near = np.abs(x) <= D1_SERIES_REL
    out[near] = 0.5 - x[near] / 6.0 + x[near] ** 2 / 8.0
    far = ~near
    if np.any(far):
        uf, vf, xf = u[far], v[far], x[far]
        moderate = np.abs(xf) <= 0.5
        logratio = np.empty(xf.shape)
        logratio[moderate] = np.log1p(xf[moderate])
        logratio[~moderate] = np.log(uf[~moderate]) - np.log(vf[~moderate])
        out[far] = (logratio - (uf - vf) / uf) / logratio ** 2
    return out


def log_mean(u: ArrayLike, v: ArrayLike) -> Real:
    """theta(u, v) = (u - v)/(log u - log v), u on the diagonal, 0 on the boundary."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(u < 0) or np.any(v < 0) or np.any(np.isnan(u)) or np.any(np.isnan(v)):
        raise DomainError("logarithmic mean needs nonnegative arguments")
    return _as_result(log_mean_unchecked(u, v))


def log_mean_d1(u: ArrayLike, v: ArrayLike) -> Real:
    """Partial derivative of theta in its first argument (interior only)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(~(u > 0)) or np.any(~(v > 0)):
        raise DomainError("derivative of the logarithmic mean needs positive arguments")
    return _as_result(log_mean_d1_unchecked(u, v))


def log_mean_d2(u: ArrayLike, v: ArrayLike) -> Real:
    return log_mean_d1(v, u)


def smoothed_log_mean(s: ArrayLike, t: ArrayLike, delta: float) -> NDArray[np.float64]:
    """theta_delta(s, t) = theta(s + delta, t + delta)."""
    return log_mean_unchecked(np.asarray(s) + delta, np.asarray(t) + delta)


def smoothed_log_mean_d1(s: ArrayLike, t: ArrayLike, delta: float) -> NDArray[np.float64]:
    return log_mean_d1_unchecked(np.asarray(s) + delta, np.asarray(t) + delta)
