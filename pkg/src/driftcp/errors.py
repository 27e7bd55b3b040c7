"""Shared exception types used across the package."""


class InvalidInput(ValueError):
    """An argument fails a structural precondition (shape, range, finiteness)."""


class EmptyInput(ValueError):
    """A required collection is empty."""


class EmptyCalibration(ValueError):
    """Calibration data is required but none was provided."""


class InvalidConfig(ValueError):
    """An experiment configuration fails validation."""


class NumericalError(RuntimeError):
    """A computation produced non-finite values."""


class PretrainingFloor(RuntimeError):
    """Source pretraining ended below the required heldout accuracy."""
