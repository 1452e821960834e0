"""Exception types shared across the package.

The CLI maps these onto exit codes: validation problems (bad dimensions,
malformed files, inconsistent counts, bad configuration) exit with 1,
numeric failures (root bracketing, construction checks) exit with 2.
"""


class MubQkdError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(MubQkdError, ValueError):
    """A dimension is invalid or unsupported for the requested operation."""


class ConstructionError(MubQkdError, RuntimeError):
    """An internally built object failed its own validity check."""


class ConfigError(MubQkdError, ValueError):
    """A configuration value or combination of values is invalid."""


class CountDataError(MubQkdError, ValueError):
    """Count data is malformed, incomplete, or internally inconsistent."""


class ParseError(CountDataError):
    """A text input could not be parsed; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericError(MubQkdError, ArithmeticError):
    """A numeric routine failed (no bracket, no convergence, bad domain)."""
