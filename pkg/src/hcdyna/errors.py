"""Shared exception types."""


class ConfigurationError(ValueError):
    """Invalid build-time configuration (layer sizes, tags, ranges)."""


class NonFiniteError(FloatingPointError):
    """A gradient, loss, or observation contained NaN or infinity."""
