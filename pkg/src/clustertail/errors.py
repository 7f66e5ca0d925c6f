"""Exception taxonomy. Exit-code classes: model=2, io=3, geometry=4, statistical=5."""


class ClusterTailError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ModelError(ClusterTailError):
    exit_code = 2


class SubcriticalityViolation(ModelError):
    pass


class DuplicateTailIndex(ModelError):
    pass


class ConnectivityViolation(ModelError):
    pass


class ModelPreconditionError(ModelError):
    """A model does not satisfy the preconditions of an experiment."""


class ConfigFormatError(ClusterTailError):
    exit_code = 3


class GeometryError(ClusterTailError):
    exit_code = 4


class NegativeCoordinate(GeometryError):
    pass


class LPNonConvergence(GeometryError):
    pass


class NoConeIntersects(GeometryError):
    pass


class NonUniqueArgmin(GeometryError):
    pass


class EmptySet(GeometryError):
    pass


class StatError(ClusterTailError):
    exit_code = 5


class InsufficientHits(StatError):
    pass


class TooFewSamples(StatError):
    pass


class DegenerateSample(StatError):
    pass


class SimulationError(ClusterTailError):
    exit_code = 2


class CapExceeded(SimulationError):
    pass


class DepthCapExceeded(SimulationError):
    pass


class MeasureError(ClusterTailError):
    exit_code = 5


class ZeroDelta(MeasureError):
    pass


class DepthZeroType(MeasureError):
    pass
