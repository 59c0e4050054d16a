"""Exception types shared across the package."""

from __future__ import annotations


class CovnetError(Exception):
    """Base class for package-specific failures."""


class FieldFormatError(CovnetError):
    """Malformed field file; carries the byte offset of the defect."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class ModelFormatError(CovnetError):
    """Malformed or inconsistent model file."""


class ResourceLimitError(CovnetError):
    """A configured size cap would be exceeded."""


class NumericError(CovnetError):
    """Numerical failure (factorization breakdown, non-convergence)."""


class TrainingDivergedError(NumericError):
    """Loss became non-finite or exploded; carries the epoch index."""

    def __init__(self, message: str, epoch: int):
        super().__init__(f"{message} (epoch {epoch})")
        self.epoch = epoch


class DegenerateModelError(NumericError):
    """Model degenerated to numerically zero constituents."""


class DegenerateTruthError(NumericError):
    """Reference kernel is numerically zero on the sampled points."""


class ConfigError(CovnetError):
    """Invalid or inconsistent run configuration."""
