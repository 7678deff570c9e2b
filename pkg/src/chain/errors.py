"""Exception hierarchy for graphflow."""


class GraphFlowError(Exception):
    """Base class for every domain error raised by the library."""


class SchemaError(GraphFlowError):
    """Malformed chain, measure or trajectory document."""


class NotStochastic(GraphFlowError):
    """Kernel rows do not sum to one or carry negative entries."""


class NotIrreducible(GraphFlowError):
    """Kernel support graph has more than one strongly connected component."""


class NotReversible(GraphFlowError):
    """Detailed balance fails for the stationary weight."""


class BadReference(GraphFlowError):
    """Reference direction p is not a strictly positive probability density."""


class DomainError(GraphFlowError):
    """Argument outside the domain of a scalar function."""


class NotInterior(GraphFlowError):
    """A measure that must be strictly positive has a vanishing entry."""


class SingularSystem(GraphFlowError):
    """Numerically rank-deficient linear system."""


class UnsolvableSystem(GraphFlowError):
    """Right-hand side outside the range of the weighted graph operator."""


class InvalidTrajectory(GraphFlowError):
    """Trajectory violates the discrete continuity equation or positivity."""


class NotConverged(GraphFlowError):
    """Iterative solver hit its iteration cap."""


class MassMismatch(GraphFlowError):
    """Endpoints of a conservative problem carry different total mass."""


class BoundaryContact(GraphFlowError):
    """Geodesic state left the strictly positive cone."""


class BoundaryStart(GraphFlowError):
    """Ray fan requested from a measure on the boundary."""


class ShootingFailed(GraphFlowError):
    """Two-point shooting found no initial momentum."""


class NoPotentials(GraphFlowError):
    """Trajectory carries no interval potentials."""


class ConfigError(GraphFlowError):
    """Invalid experiment configuration (usage error)."""


class IoError(GraphFlowError):
    """Report or artifact could not be written."""
