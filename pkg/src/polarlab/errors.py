"""Exception types shared across the package."""


class PolarLabError(Exception):
    """Base class for all package errors."""


class ValidationError(PolarLabError, ValueError):
    """Input has the wrong shape, length or value range."""


class ConfigurationError(PolarLabError, ValueError):
    """A configured limit or setting makes the request impossible."""


class CheckpointError(PolarLabError):
    """A checkpoint file could not be loaded."""


class TrainingDivergedError(PolarLabError, RuntimeError):
    """Training produced a non-finite loss."""
