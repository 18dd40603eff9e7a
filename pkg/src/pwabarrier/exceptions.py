"""Exception types raised across the package."""


class PwaError(Exception):
    """Base class for all errors raised by pwabarrier."""


class GeometryError(PwaError, ValueError):
    pass


class UnboundedPolytope(GeometryError):
    pass


class EmptyPolytope(GeometryError):
    pass


class DegeneratePolytope(GeometryError):
    """The region has empty interior (not full-dimensional)."""


class DegenerateInput(GeometryError):
    """Points are affinely dependent, or too few to span the space."""


class DimensionMismatch(PwaError, ValueError):
    pass


class OutOfDomain(PwaError):
    """A point lies in no cell of the partition."""


class InvalidPartition(PwaError, ValueError):
    pass


class TooManyNeurons(PwaError, ValueError):
    pass


class EmptyPartition(PwaError, ValueError):
    pass


class SolverFailure(PwaError, RuntimeError):
    pass


class DegenerateSubcell(PwaError):
    pass


class SamplingFailure(PwaError, RuntimeError):
    pass


class NotTwoDimensional(PwaError, ValueError):
    pass


class DegenerateRegionWarning(UserWarning):
    """An activation region was discarded because its interior is too thin."""


class NoBisector(PwaError):
    """The angle difference along an edge has no sign change."""


class SolverTimeLimit(SolverFailure):
    """The LP solver stopped at its time limit."""
