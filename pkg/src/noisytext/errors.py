"""Shared exception types."""


class ConfigError(ValueError):
    """Invalid configuration or spec (CLI exit code 1)."""


class FormatError(ValueError):
    """Malformed input file."""


class DataError(ValueError):
    """Dataset violates a precondition (empty split, missing labels, ...)."""
