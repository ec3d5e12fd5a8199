"""Exception hierarchy.

Configuration-type problems derive from :class:`ConfigError` (CLI exit
code 2); numerical failures derive from :class:`NumericError` (exit 3).
"""


class PfodeError(Exception):
    """Base class for all package errors."""


class ConfigError(PfodeError, ValueError):
    """Invalid arguments, shapes or configuration."""


class InvalidRangeError(ConfigError):
    pass


class OrderingError(ConfigError):
    pass


class DimensionMismatchError(ConfigError):
    pass


class DomainError(ConfigError):
    pass


class InfeasibleBudgetError(ConfigError):
    pass


class NumericError(PfodeError, ArithmeticError):
    """Non-finite values or degenerate geometry encountered at runtime."""


class DegenerateError(NumericError):
    pass
