"""Exception hierarchy shared by all modules."""


class BoolCDError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(BoolCDError, ValueError):
    """Array shapes do not agree."""


class InputLengthError(BoolCDError, ValueError):
    """A driving signal or series is too short for the requested horizon."""


class DegenerateReservoirError(BoolCDError):
    """A generated state matrix has a column that is identically zero."""


class ConvergenceError(BoolCDError):
    """An iterative solver stopped before reaching its tolerance.

    The last iterate is kept on ``estimate`` so callers can still use it.
    """

    def __init__(self, message, estimate=None, iterations=None):
        super().__init__(message)
        self.estimate = estimate
        self.iterations = iterations


class SizeBoundError(BoolCDError, ValueError):
    """An exhaustive computation was requested on a problem that is too large."""


class StateError(BoolCDError, RuntimeError):
    """An object was used before being initialised."""


class ConfigError(BoolCDError, ValueError):
    """A configuration file or override is invalid."""
