"""Exception types shared across the package.

The CLI maps each family to its own exit code.
"""


class FuncNetError(Exception):
    """Base class for package errors."""


class ShapeError(FuncNetError, ValueError):
    """Operands have incompatible shapes."""


class ConfigError(FuncNetError, ValueError):
    """Invalid configuration value or unknown key."""


class DataError(FuncNetError, ValueError):
    """Malformed or inconsistent input data."""


class NumericError(FuncNetError, ArithmeticError):
    """Non-finite values or a failed numerical check."""


class MissingGradientError(FuncNetError, RuntimeError):
    """An optimizer step was requested before gradients were computed."""
