"""Exception types raised across the package."""


class DHYMError(Exception):
    """Base class for all package errors."""


class PhaseOutOfRange(DHYMError, ValueError):
    """The total phase of a spectrum left the interval (0, pi)."""


class MagnitudeError(DHYMError, OverflowError):
    pass


class ConeViolation(DHYMError, ValueError):
    pass


class NonPositiveMetric(DHYMError, ValueError):
    pass


class NormalizationError(DHYMError, ValueError):
    pass


class ConeExit(DHYMError):
    """An iterate left the admissible phase window.

    ``point`` is the flat grid index of the worst point and ``margin`` the
    window margin there (negative or below the configured safety).
    """

    def __init__(self, message, point=None, margin=None):
        super().__init__(message)
        self.point = point
        self.margin = margin


class PositivityExit(DHYMError):
    pass


class NoConvergence(DHYMError):
    pass


class LinearSolveFailure(DHYMError):
    pass


class BracketFailure(DHYMError, ValueError):
    pass


class HypothesisFail(DHYMError):
    """De Giorgi hypothesis violated; ``pair`` is the offending (s, s')."""

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class NearBoundaryWarning(UserWarning):
    pass
