"""Shared exception types."""

from numpy.linalg import LinAlgError


class ShapeError(ValueError):
    """Operands have incompatible or invalid dimensions."""


class NormalizationError(ValueError):
    """A vector required to be unit length is not."""


class IllConditionedError(LinAlgError):
    """A matrix factorization failed even after jitter escalation."""


class ConfigurationError(ValueError):
    """A configuration value is out of its admissible range."""
