"""Exception types shared across the package."""


class BellsweepError(Exception):
    """Base class for all package errors."""


class DomainError(BellsweepError, ValueError):
    """An input lies outside the mathematical domain of an operation."""


class ConfigurationError(BellsweepError, ValueError):
    """Inconsistent sizes, modes or run parameters."""


class ResourceError(BellsweepError):
    """A requested computation exceeds the desk-scale guards."""


class NumericError(BellsweepError):
    """A numerical routine received invalid input or failed to converge."""


class ConvergenceError(NumericError):
    """An iterative solver did not reach its tolerance.

    Carries the last observed residual so callers can report it.
    """

    def __init__(self, message, last_delta=None):
        super().__init__(message)
        self.last_delta = last_delta


class CacheError(BellsweepError):
    """A cache file is unreadable or fails its checksum."""
