"""Shared exception types for the screening pipeline."""


class DimensionError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class ConfigError(ValueError):
    """A configuration value violates its documented constraints."""


class ManifestError(ValueError):
    """A dataset manifest failed validation; message lists offending lines."""


class UndefinedMetricError(ValueError):
    """A metric's denominator is zero; the value is undefined, never silently 0."""


class UnreliableCIError(RuntimeError):
    """Too many degenerate resamples to report a trustworthy interval."""


class OracleFailure(RuntimeError):
    """A verification oracle could not be evaluated (distinct from a mismatch)."""


class CheckpointError(ValueError):
    """A weight checkpoint is malformed or structurally incompatible."""
