"""Exception types shared across the package."""


class CrowdNavError(Exception):
    """Base class for package errors."""


class ConfigurationError(CrowdNavError):
    """Invalid configuration, file format, or checkpoint contents (CLI exit code 1)."""


class InvariantViolation(CrowdNavError):
    """A runtime sanity check failed (CLI exit code 2)."""
