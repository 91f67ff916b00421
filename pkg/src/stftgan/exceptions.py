"""Exception types shared across the package."""


class StftGanError(Exception):
    """Base class for all package errors."""


class ConfigurationError(StftGanError):
    """Invalid or inconsistent configuration values."""


class InputError(StftGanError):
    """Malformed runtime input: empty sets, degenerate signals, bad metadata."""


class ShapeError(InputError):
    """Array or tensor shape does not match the declared contract."""


class NumericalError(StftGanError):
    """Numerical failure: non-finite losses, indefinite covariance, overflow."""


class CheckpointError(StftGanError):
    """Checkpoint directory is missing, incomplete, or inconsistent."""
