"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: configuration errors exit with 2,
data errors with 3, training failures with 4.
"""


class ConfigError(ValueError):
    """Invalid configuration: bad window geometry, unknown enum value, etc."""


class DataError(ValueError):
    """Malformed or inconsistent input data: shape mismatch, bad manifest, etc."""


class TrainingError(RuntimeError):
    """Training could not complete: divergence or a split-audit violation."""


class UndefinedMetricError(ValueError):
    """A ranking metric is undefined for the given labels (single class)."""
