"""Exception hierarchy shared by all modules.

The CLI maps each class onto a distinct exit code, so raise the narrowest
one that applies.
"""


class DynRangeError(Exception):
    """Base class for every error raised by this package."""


class ArgumentError(DynRangeError, ValueError):
    """Invalid parameter or precondition violation (CLI exit code 1)."""


class DecodeError(DynRangeError):
    """Unreadable, truncated or unsupported audio container (exit code 2)."""


class EstimationError(DynRangeError):
    """Estimation could not produce a result, e.g. all blocks silent (exit code 3)."""


class SilentSignalError(EstimationError):
    """Nothing above the silence threshold."""
