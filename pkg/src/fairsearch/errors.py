"""Exception types raised across the package."""


class FairsearchError(Exception):
    """Base class for all package errors."""


class SchemaError(FairsearchError):
    """A required column is missing or the schema is inconsistent."""


class DataError(FairsearchError):
    """Malformed data content (non-numeric cell, non-binary sensitive value, empty file)."""


class ParameterError(FairsearchError, ValueError):
    """An argument falls outside its documented domain."""


class ShapeError(FairsearchError, ValueError):
    """Array shapes or lengths do not line up."""


class StratificationError(FairsearchError):
    """A label class is too small to be spread across the requested partitions."""


class TrainingError(FairsearchError):
    """The training data cannot support model fitting (e.g. a single class)."""


class MetricUndefinedError(FairsearchError):
    """A rate needed by a fairness metric has an empty denominator."""


class ConfigError(FairsearchError, ValueError):
    """An invalid search or scenario configuration."""


class PairingError(FairsearchError):
    """Result sets cannot be paired (run counts or seeds misaligned)."""
