"""Exception taxonomy shared across the toolkit.

Usage/configuration problems map to CLI exit code 2, runtime failures to 1.
"""


class UsageError(ValueError):
    """Caller violated an operation's precondition."""


class ConfigurationError(UsageError):
    """Invalid or inconsistent configuration (files, layer specs, unknown keys)."""


class IngestionError(ConfigurationError):
    """Dataset could not be loaded (missing target column, no usable rows)."""


class NumericInputError(ValueError):
    """A numeric input contained NaN or infinity."""


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, message: str | None = None):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}")


class NumericalConditioningError(RuntimeError):
    """Cholesky factorization failed even after jitter escalation."""

    def __init__(self, jitter: float, message: str | None = None):
        self.jitter = jitter
        super().__init__(
            message or f"covariance not positive definite (final jitter tried: {jitter:g})"
        )


class DegeneratePivotError(RuntimeError):
    """Rank-1 update requested on a point with (near-)zero posterior variance."""
