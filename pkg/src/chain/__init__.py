"""Markov-chain and measure core."""

from .errors import (
    GraphFlowError, SchemaError, NotStochastic, NotIrreducible, NotReversible,
    BadReference, DomainError, NotInterior, SingularSystem, UnsolvableSystem,
    InvalidTrajectory, NotConverged, MassMismatch, BoundaryContact,
    BoundaryStart, ShootingFailed, NoPotentials, ConfigError, IoError
)
from .markov import (
    MarkovChain, Measure, EdgeField, build_chain, load_chain, load_chain_file,
    serialize_chain, stationary_distribution, is_irreducible, total_mass,
    as_measure, load_measure, is_interior, min_entry, canonical, is_canonical,
    is_antisymmetric, random_reversible_chain
)

__all__ = [
    'GraphFlowError', 'SchemaError', 'NotStochastic', 'NotIrreducible',
    'NotReversible', 'BadReference', 'DomainError', 'NotInterior',
    'SingularSystem', 'UnsolvableSystem', 'InvalidTrajectory', 'NotConverged',
    'MassMismatch', 'BoundaryContact', 'BoundaryStart', 'ShootingFailed',
    'NoPotentials', 'ConfigError', 'IoError',
    'MarkovChain', 'Measure', 'EdgeField', 'build_chain', 'load_chain',
    'load_chain_file', 'serialize_chain', 'stationary_distribution',
    'is_irreducible', 'total_mass', 'as_measure', 'load_measure',
    'is_interior', 'min_entry', 'canonical', 'is_canonical', 'is_antisymmetric',
    'random_reversible_chain'
]
