"""Exception types shared across the package."""

from __future__ import annotations


class FHAError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(FHAError):
    """A configuration document or dataclass failed validation."""


class FormatError(FHAError):
    """A serialized artifact (dataset, model, results line) is malformed."""


class ProtocolError(FHAError):
    """The few-shot protocol or pairing preconditions were violated."""


class InsufficientDataError(FHAError):
    """A split does not contain enough samples for the requested operation."""


class MissingClassError(FHAError):
    """An operation needs samples of a class that has none."""


class NumericalError(FHAError):
    """Training produced non-finite values."""


class QualityGateError(FHAError):
    """A trained artifact failed its acceptance threshold."""
