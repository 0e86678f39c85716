"""Error types shared across the package."""


class UsageError(ValueError):
    """Raised when a caller violates an interface precondition."""


class TrainingDiverged(RuntimeError):
    """Raised when a loss or gradient turns non-finite during training."""
