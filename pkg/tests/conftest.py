"""Shared fixtures: the two-state chain of the experiments and random chains."""

import numpy as np
import pytest

from src.chain.markov import build_chain, random_reversible_chain


@pytest.fixture
def two_state():
    """K = [[0.8, 0.2], [0.4, 0.6]], pi = (2/3, 1/3), p = (1, 1), a = b = 1."""
    return build_chain([[0.8, 0.2], [0.4, 0.6]], p=[1.0, 1.0])


@pytest.fixture
def symmetric_chain():
    return build_chain([[0.5, 0.5], [0.5, 0.5]], p=[1.0, 1.0])


@pytest.fixture
def cycle_chain():
    """Symmetric 3-cycle with every off-diagonal edge present."""
    K = np.array([[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]])
    return build_chain(K, states=["a", "b", "c"])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def random_chain(rng):
    return random_reversible_chain(3, rng)
