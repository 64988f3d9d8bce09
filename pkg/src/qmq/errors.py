"""Exception types shared across the package."""


class QMQError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(QMQError, ValueError):
    """Input outside the domain where an operation is defined."""


class ResourceError(QMQError, RuntimeError):
    """Requested computation exceeds a configured size cap."""


class ConsistencyError(QMQError, RuntimeError):
    """An internal invariant (e.g. completeness of measurement operators) failed."""


class FitDomainError(DomainError):
    """Data series cannot be fitted by the requested model."""


class UndefinedConditionalError(DomainError):
    """Conditional state requested for an outcome of (numerically) zero probability."""


class ConfigError(QMQError, ValueError):
    """Scenario configuration cannot be parsed or has unknown entries."""
