"""
Exception hierarchy shared by every workbench module.

Each top-level class maps to a distinct CLI exit code.
"""


class WorkbenchError(Exception):
    """Base class for all workbench failures."""
    exit_code = 1


class ConfigError(WorkbenchError, ValueError):
    """Invalid configuration or argument."""
    exit_code = 2


class DataError(WorkbenchError, ValueError):
    """Unreadable or inconsistent input data."""
    exit_code = 3


class ComputeError(WorkbenchError, RuntimeError):
    """A computation could not be completed."""
    exit_code = 4


class IDXFormatError(DataError):
    """Malformed IDX file, reported with the byte offset of the problem."""

    def __init__(self, message: str, path: str = "", offset: int = 0):
        self.path = path
        self.offset = offset
        super().__init__(f"{message} (file={path!s}, offset={offset})")


class ChecksumMismatchError(DataError):
    """File content does not match the expected digest."""


class TopologyError(ConfigError):
    """Invalid graph dimensions or node selection."""


class SamplerError(ComputeError, ValueError):
    """A sampler was asked for something it cannot produce."""


class ArchitectureError(ConfigError):
    """Hyperparameters that do not yield a valid network."""

    def __init__(self, message: str, stage: str = ""):
        self.stage = stage
        super().__init__(f"{message} (stage={stage})" if stage else message)


class CalibrationError(ComputeError, ValueError):
    """An energy profile could not be solved for."""


# Exit code used for anything that is not a WorkbenchError
UNEXPECTED_EXIT_CODE = ComputeError.exit_code
