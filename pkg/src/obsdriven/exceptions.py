"""Exception hierarchy for obsdriven."""


class ObsDrivenError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(ObsDrivenError, ValueError):
    """A natural parameter or model coefficient lies outside its domain."""


class InvalidMeanError(ObsDrivenError, ValueError):
    """A conditional mean lies outside the range of the mean function.

    Attributes
    ----------
    t : int or None
        1-based time index at which the recursion left the admissible range,
        when raised from a likelihood recursion.
    """

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class InvalidObservationError(ObsDrivenError, ValueError):
    """An observation is outside the support of the family."""


class InfiniteQuantileError(ObsDrivenError, ValueError):
    """Requested quantile at level one of an unbounded distribution."""


class InvalidStateError(ObsDrivenError, ValueError):
    """The evolution rule produced a nonpositive conditional mean."""


class UndefinedMeanError(ObsDrivenError, ValueError):
    """The stationary mean does not exist (non-contracting dynamics)."""


class UnsupportedVariantError(ObsDrivenError, NotImplementedError):
    """The operation is not available for this family or dynamics variant."""


class InfiniteVarianceError(ObsDrivenError, ValueError):
    """The finite-variance condition fails, so stationary moments diverge."""


class UndefinedACFError(ObsDrivenError, ValueError):
    """Autocorrelations are undefined for a constant series."""


class RankDeficientError(ObsDrivenError, ValueError):
    """The information matrix is singular.

    Attributes
    ----------
    null_direction : ndarray
        Unit vector spanning the (numerically) null eigenspace.
    """

    def __init__(self, message, null_direction=None):
        super().__init__(message)
        self.null_direction = null_direction


class DegenerateVarianceError(ObsDrivenError, ValueError):
    """A conditional variance is zero, so residuals cannot be standardized."""


class NoValidKnotsError(ObsDrivenError, ValueError):
    """No admissible knot placement exists for the data."""


class FitFailedError(ObsDrivenError, RuntimeError):
    """Every candidate fit in a batch failed.

    Attributes
    ----------
    errors : list
        The underlying exceptions, one per failed fit.
    """

    def __init__(self, message, errors=None):
        super().__init__(message)
        self.errors = list(errors or [])


class NonContractingError(ObsDrivenError, ValueError):
    """The dynamics fail the contraction condition and ``force`` was not set."""
