"""Simulation of charge-sensor readout of charge and spin qubits.

The sensor is modeled as a second two-level system that is repeatedly
initialized, coupled to the data qubit for one step and read projectively.
"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # pragma: no cover - running from a source tree
    __version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    ConsistencyError,
    DomainError,
    FitDomainError,
    QMQError,
    ResourceError,
    UndefinedConditionalError,
)

__all__ = [
    "__version__",
    "QMQError",
    "DomainError",
    "ResourceError",
    "ConsistencyError",
    "FitDomainError",
    "UndefinedConditionalError",
    "ConfigError",
]
