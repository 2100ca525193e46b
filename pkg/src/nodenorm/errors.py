"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: ``ConfigError`` -> 1, ``DataError`` -> 2,
anything else -> 3.
"""


class NodeNormError(Exception):
    """Base class for all package errors."""


class ShapeError(NodeNormError, ValueError):
    """Operand shapes do not agree."""


class ValidationError(NodeNormError, ValueError):
    """An input violates a documented precondition."""


class StructureError(ValidationError):
    """A sparse matrix is not structurally well formed (or not symmetric)."""


class ConfigError(NodeNormError, ValueError):
    """A configuration value is out of range or inconsistent."""


class DataError(NodeNormError):
    """A dataset could not be loaded or does not satisfy its invariants."""


class SplitError(DataError):
    """A requested train/val/test split cannot be satisfied."""
