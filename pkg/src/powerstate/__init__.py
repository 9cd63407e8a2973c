"""Operational-state discovery from power-quality harmonics."""
__version__ = "0.1.0"

from .errors import ConfigError, DataError, NumericalError, PowerStateError  # noqa: E402
from .frame import TimestampedFrame  # noqa: E402

__all__ = ["__version__", "TimestampedFrame", "PowerStateError", "ConfigError", "DataError",
           "NumericalError"]
