"""Shared exception types."""


class VecsimError(ValueError):
    """Base class for all package-specific errors."""


class ConfigError(VecsimError):
    """Invalid configuration value or unparseable config file."""


class IntegrityError(VecsimError):
    """Cross-reference violation: unknown task/vehicle/server id, malformed schedule."""


class SizeError(VecsimError):
    """Instance too large for an exhaustive procedure."""


class UsageError(VecsimError):
    """Inconsistent call, e.g. comparing results with mismatched grouping keys."""
