# core/utils/errors.py

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2


class LqSparseError(Exception):
    """Base class for all errors raised by the package"""


class ConfigError(LqSparseError, ValueError):
    """Invalid parameters or unreadable configuration"""


class MeshError(LqSparseError, ValueError):
    """Invalid mesh, mesh mismatch between fields, or broken refinement lineage"""


class SolverError(LqSparseError, RuntimeError):
    """A numerical method did not converge"""

    def __init__(self, message, residual=None, trace=None, report=None):
        super().__init__(message)
        self.residual = residual
        self.trace = list(trace) if trace is not None else []
        self.report = report


def exit_code_for(error):
    if isinstance(error, ConfigError):
        return EXIT_CONFIG
    return EXIT_NUMERICAL
