"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Invalid argument or malformed input data."""


class NumericalError(RuntimeError):
    """A numerical routine failed or produced a non-finite result."""


class DegenerateOverlapError(NumericalError):
    """Eigenvector overlap with the right-hand side is numerically zero."""


class ConfigError(ValidationError):
    """Invalid experiment configuration."""
