"""Tests for chain construction, stationary weights and measures."""

import json

import numpy as np
import pytest

from src.chain.errors import BadReference, NotIrreducible, NotReversible, NotStochastic, SchemaError
from src.chain.markov import (
    as_measure, build_chain, canonical, is_antisymmetric, is_canonical, is_interior,
    load_chain, load_measure, random_reversible_chain, serialize_chain,
    stationary_distribution, total_mass
)


def test_two_state_stationary_weight(two_state):
    """pi is computed when absent."""
    np.testing.assert_allclose(two_state.pi, [2.0 / 3.0, 1.0 / 3.0], atol=1e-12)
    assert two_state.n == 2
    assert two_state.states == ("1", "2")


def test_stationary_distribution_examples():
    np.testing.assert_allclose(stationary_distribution([[0.9, 0.1], [0.3, 0.7]]), [0.75, 0.25], atol=1e-12)
    uniform = np.full((4, 4), 0.25)
    np.testing.assert_allclose(stationary_distribution(uniform), np.full(4, 0.25), atol=1e-12)


def test_identity_kernel_is_not_irreducible():
    with pytest.raises(NotIrreducible):
        build_chain(np.eye(2))


def test_rotating_cycle_is_not_reversible():
    K = [[0.0, 0.7, 0.3], [0.3, 0.0, 0.7], [0.7, 0.3, 0.0]]
    with pytest.raises(NotReversible):
        build_chain(K)


def test_non_stationary_pi_is_rejected():
    with pytest.raises(NotReversible):
        build_chain([[0.8, 0.2], [0.4, 0.6]], pi=[0.5, 0.5])


def test_row_sums_must_be_one():
    with pytest.raises(NotStochastic):
        build_chain([[0.8, 0.3], [0.4, 0.6]])
    with pytest.raises(NotStochastic):
        build_chain([[1.2, -0.2], [0.4, 0.6]])


def test_reference_direction_must_be_normalized():
    with pytest.raises(BadReference):
        build_chain([[0.8, 0.2], [0.4, 0.6]], p=[2.0, 2.0])
    with pytest.raises(BadReference):
        build_chain([[0.8, 0.2], [0.4, 0.6]], p=[1.5, 0.0])

    chain = build_chain([[0.8, 0.2], [0.4, 0.6]], p=[2.0, 2.0], normalize_p=True)
    np.testing.assert_allclose(chain.p, [1.0, 1.0])


def test_chain_arrays_are_read_only(two_state):
    with pytest.raises(ValueError):
        two_state.K[0, 0] = 0.5


def test_conductance_is_symmetric(random_chain):
    c = random_chain.conductance
    assert np.array_equal(c, c.T)


def test_load_chain_accepts_json_and_yaml():
    doc = {"states": ["x", "y"], "K": [[0.8, 0.2], [0.4, 0.6]], "p": [1, 1]}
    from_json = load_chain(json.dumps(doc))
    from_yaml = load_chain("states: [x, y]\nK: [[0.8, 0.2], [0.4, 0.6]]\np: [1, 1]\n")
    np.testing.assert_array_equal(from_json.pi, from_yaml.pi)
    assert from_json.states == ("x", "y")


def test_load_chain_schema_errors():
    with pytest.raises(SchemaError):
        load_chain({"states": ["x", "y"]})
    with pytest.raises(SchemaError):
        load_chain({"states": ["x", "y"], "K": [[1.0]]})
    with pytest.raises(SchemaError):
        load_chain({"states": ["x", "y"], "K": [[0.8, 0.2], [0.4, 0.6]], "color": "red"})
    with pytest.raises(SchemaError):
        load_chain("[1, 2")


def test_serialized_chain_reparses_identically(random_chain):
    again = load_chain(serialize_chain(random_chain))
    assert np.array_equal(again.K, random_chain.K)
    assert np.array_equal(again.pi, random_chain.pi)
    assert np.array_equal(again.p, random_chain.p)


def test_small_weights_survive_serialization(two_state):
    chain = build_chain(two_state.K, p=two_state.p, a=1e-5, b=2.5e-7, states=two_state.states)
    text = serialize_chain(chain)
    assert '"a": 1e-05' in text
    again = load_chain(text)
    assert again.a == 1e-5 and again.b == 2.5e-7


def test_exponent_floats_without_a_dot():
    doc = '{"states": ["x", "y"], "K": [[0.8, 0.2], [0.4, 0.6]], "a": 1e-3}'
    assert load_chain(doc).a == 1e-3
    chain = load_chain("states: [x, y]\nK: [[0.8, 0.2], [0.4, 0.6]]\na: 1e-3\nb: 2E+1\n")
    assert chain.a == 1e-3 and chain.b == 20.0


def test_total_mass_examples(two_state, random_chain):
    assert total_mass([0.6, 0.8], two_state) == pytest.approx(2.0 / 3.0, abs=1e-12)
    assert total_mass([0.0, 0.0], two_state) == 0.0
    assert total_mass(random_chain.p, random_chain) == pytest.approx(1.0, abs=1e-12)


def test_measures(two_state):
    np.testing.assert_array_equal(load_measure("0.6, 0.8", two_state), [0.6, 0.8])
    np.testing.assert_array_equal(load_measure('{"1": 0.6, "2": 0.8}', two_state), [0.6, 0.8])
    np.testing.assert_array_equal(load_measure("[0.6, 0.8]", two_state), [0.6, 0.8])
    with pytest.raises(SchemaError):
        load_measure("0.6", two_state)
    with pytest.raises(SchemaError):
        as_measure([-1.0, 2.0])
    assert is_interior([0.1, 0.2])
    assert not is_interior([0.0, 0.2])


def test_canonical_fields(cycle_chain):
    assert is_canonical(canonical(np.ones((3, 3)), cycle_chain), cycle_chain)
    assert not is_canonical(np.ones((3, 3)), cycle_chain)
    F = np.array([[0.0, 1.0, -2.0], [-1.0, 0.0, 3.0], [2.0, -3.0, 0.0]])
    assert is_antisymmetric(F)
    assert not is_antisymmetric(np.abs(F))


@pytest.mark.parametrize("n", [2, 3, 5])
def test_random_chains_are_valid(n, rng):
    chain = random_reversible_chain(n, rng)
    flow = chain.pi[:, None] * chain.K
    assert np.max(np.abs(flow - flow.T)) <= 1e-10
    assert chain.p @ chain.pi == pytest.approx(1.0)
