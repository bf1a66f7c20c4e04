"""Exception hierarchy shared by all modules."""


class TripleFlowError(Exception):
    """Base class for every error raised by this package."""


class ArgumentError(TripleFlowError, ValueError):
    pass


class Unsupported(TripleFlowError, NotImplementedError):
    pass


class DegenerateSegment(TripleFlowError):
    pass


class TopologyError(TripleFlowError):
    pass


class GeometryError(TripleFlowError):
    pass


class MeshError(TripleFlowError):
    pass


class OutOfDomain(TripleFlowError):
    pass


class SpaceError(TripleFlowError):
    pass


class ContextError(TripleFlowError):
    pass


class SolverError(TripleFlowError):
    pass


class SingularSystem(SolverError):
    pass


class PicardDiverged(SolverError):
    pass


class AssumptionViolated(TripleFlowError):
    """Raised when the well-posedness assumptions fail for the current network.

    ``which`` names the violated assumption(s), e.g. ``("A2",)``.
    """

    def __init__(self, message, which=()):
        super().__init__(message)
        self.which = tuple(which)
