"""Exception hierarchy and warning categories used across the toolkit.

The CLI maps :class:`SdnpError` (and subclasses) to exit code 2 (bad input);
anything else is an internal error (exit code 1).
"""


class SdnpError(Exception):
    """Base class for all toolkit errors caused by invalid input or state."""


class DimensionError(SdnpError):
    """Shapes or sizes violate an operation's preconditions."""


class ParameterError(SdnpError):
    """A scalar parameter (kernel size, threshold, factor) is out of range."""


class DataError(SdnpError):
    """Data values violate a contract (non-integer pixels, bad pmf, ...)."""


class DegenerateInputError(SdnpError):
    """Input is formally valid but statistically degenerate (constant matrix,
    empty support, all mass in the excluded bin)."""


class NotFoundError(SdnpError, KeyError):
    """A catalog lookup had no match; callers may fall back to a full search."""


class DegenerateCorrelationWarning(UserWarning):
    """A correlation was requested against a constant input; the score was
    forced to 0 instead of raising."""


class FlatnessWarning(UserWarning):
    """A region assumed flat failed the flatness diagnostic."""


class MonotonicityWarning(UserWarning):
    """A soft ordering check failed (e.g. ISO gain not non-decreasing)."""
