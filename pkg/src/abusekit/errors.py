"""Exception types shared across the toolkit."""


class AbusekitError(Exception):
    """Base class for every error raised by this package."""


class SchemaError(AbusekitError):
    """An input file is missing a required column or field."""

    def __init__(self, message, path=None):
        if path is not None:
            message = f"{path}: {message}"
        super().__init__(message)


class ParseError(AbusekitError):
    """A cell, line, or record could not be decoded."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        if path is not None and line is not None:
            message = f"{path}:{line}: {message}"
        elif path is not None:
            message = f"{path}: {message}"
        elif line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DataIntegrityError(AbusekitError):
    """Input data violates an internal consistency rule (e.g. duplicate keys)."""


class ConfigurationError(AbusekitError):
    """A configuration value or combination of values is invalid."""


class ShapeError(AbusekitError):
    """An array argument has an incompatible shape."""


class BoundsError(AbusekitError):
    """An index is outside the valid range."""


class CorruptionError(AbusekitError):
    """A binary artifact (checkpoint, cache) fails its integrity checks."""


class NumericError(AbusekitError):
    """Training produced a non-finite value."""
