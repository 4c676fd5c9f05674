"""Exception hierarchy shared by all modules."""


class ColoringError(Exception):
    """Base class for every error raised by this package."""


class InvalidConfig(ColoringError, ValueError):
    pass


class ClockExhausted(ColoringError):
    """Raised by a Poisson-time step once the clock has passed ``t_max``."""


class EmptyIndex(ColoringError, LookupError):
    pass


class EmptySet(ColoringError, ValueError):
    pass


class ResolutionTooLarge(ColoringError, MemoryError):
    pass


class DegenerateFit(ColoringError, ValueError):
    pass


class PreconditionViolated(ColoringError, ValueError):
    pass


class CannotPlaceBalls(ColoringError, ValueError):
    pass


class DegenerateCurve(ColoringError, ValueError):
    pass


class NonpositiveBound(ColoringError, ValueError):
    pass


class DepthInfeasible(ColoringError, ValueError):
    pass


class UnsupportedDimension(ColoringError, ValueError):
    pass


class SnapshotFormatError(ColoringError, ValueError):
    """Bad magic, unknown schema version, truncated data or hash mismatch."""


class ReplicateFailed(ColoringError):
    def __init__(self, replicate, cause):
        super().__init__(f"replicate {replicate} failed: {cause!r}")
        self.replicate = replicate
        self.cause = cause
