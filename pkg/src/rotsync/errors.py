"""Exception hierarchy. Each CLI-facing error carries the exit code it maps to."""


class RotsyncError(Exception):
    exit_code = 1


class InvalidDimensionError(RotsyncError, ValueError):
    exit_code = 5


class DimensionMismatchError(InvalidDimensionError):
    pass


class CutLocusError(RotsyncError, ValueError):
    """A rotation angle sits (numerically) at pi, where the principal log is not unique."""


class AnchoredViolationError(RotsyncError, ValueError):
    pass


class ConvergenceError(RotsyncError, RuntimeError):
    def __init__(self, message, best=None, best_value=None):
        super().__init__(message)
        self.best = best
        self.best_value = best_value


class UnsupportedDimensionError(InvalidDimensionError):
    pass


class QuadratureError(RotsyncError, RuntimeError):
    exit_code = 3


class SamplerStuckError(RotsyncError, RuntimeError):
    exit_code = 6


class GraphError(RotsyncError, ValueError):
    exit_code = 2


class IllPosedError(RotsyncError, ValueError):
    exit_code = 4


class InvalidSourceError(RotsyncError, ValueError):
    pass
