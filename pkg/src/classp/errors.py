"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes do not conform."""


class NumericError(ArithmeticError):
    """A non-finite value appeared where a finite one is required."""


class FormatError(ValueError):
    """A data file does not follow the expected binary layout."""


class UsageError(RuntimeError):
    """An API was called out of sequence, e.g. with a stale forward cache."""


class ConfigError(ValueError):
    """An experiment configuration is invalid."""
