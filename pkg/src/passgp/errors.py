"""Exception types shared across the package."""


class PassGPError(Exception):
    """Base class for all library errors."""


class NumericalError(PassGPError):
    """Numerical failure (NaN moments, negative variances, broken state).

    ``site`` carries the offending training index when one is known.
    """

    def __init__(self, message, site=None):
        if site is not None:
            message = f"{message} (site {site})"
        super().__init__(message)
        self.site = site


class FactorizationError(NumericalError):
    """A matrix that must be positive definite failed to factorize."""


class ParseError(PassGPError):
    """Malformed input file.

    ``line`` is the 1-based line number when the format is line-oriented.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(PassGPError, ValueError):
    """Invalid or mutually inconsistent configuration."""
