"""Exception hierarchy shared across the package."""


class CausalcastError(Exception):
    """Base class for all package errors."""


class ShapeError(CausalcastError):
    """Operand shapes do not conform; message names both shapes."""


class ConfigError(CausalcastError):
    """A configuration value violates its contract."""


class DegenerateSeriesError(CausalcastError):
    """A series is (near-)constant and cannot be standardized; names the region."""


class InsufficientSamplesError(CausalcastError):
    """Not enough observations for the requested statistical test."""


class InsufficientDataError(CausalcastError):
    """Panel too short for the requested split/windowing."""


class IngestionError(CausalcastError):
    """Malformed input file; message carries the offending line number."""


class NonFiniteLossError(CausalcastError):
    """Forward pass produced NaN/Inf; message carries the step index."""
