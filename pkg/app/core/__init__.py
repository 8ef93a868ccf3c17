from .config import Settings, get_settings
from .logging import command_context, get_logger, setup_logging
from .errors import (
    WorkbenchError,
    ConfigError,
    DataError,
    ComputeError,
)

__all__ = [
    "Settings", "get_settings", "setup_logging", "get_logger", "command_context",
    "WorkbenchError", "ConfigError", "DataError", "ComputeError",
]
