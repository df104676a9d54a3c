"""Exception and warning types raised across the package."""


class GKnockoffError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(GKnockoffError, ValueError):
    """Arguments are malformed or outside the supported domain."""


class NonFiniteError(InvalidInputError):
    """An input array contains NaN or infinite entries."""


class RankDeficientError(GKnockoffError, ValueError):
    """A matrix that must have full (row or column) rank does not."""


class NotPSDError(GKnockoffError, ValueError):
    """A matrix could not be factorized even after diagonal jitter."""


class NotPDError(GKnockoffError, ValueError):
    """A Gram matrix that must be positive definite is (numerically) singular."""


class DimensionTooSmallError(GKnockoffError, ValueError):
    """Not enough effective rows to build knockoffs without augmentation."""


class GramCheckError(GKnockoffError, ArithmeticError):
    """A constructed knockoff matrix violates the Gram identities."""


class OutOfRangeError(GKnockoffError, IndexError):
    """A location index falls outside the range where a statistic is defined."""


class AllDegenerateError(GKnockoffError, ValueError):
    """Every bandwidth in a grid produced a degenerate constrained fit."""


class RoutingError(GKnockoffError, ValueError):
    """No detection route is feasible for the supplied problem dimensions."""


class ConvergenceWarning(UserWarning):
    """Coordinate descent hit its sweep budget before meeting the KKT tolerance."""


class ZeroVarianceWarning(UserWarning):
    """A constant design column was encountered during screening."""
