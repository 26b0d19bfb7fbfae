"""Exceptions raised by the imaging pipeline.

Each error class knows the process exit code the command line reports for it.
"""

from typing import Optional

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_PARTIAL_SWEEP = 3


class MlcsError(Exception):
    """Base class for every error raised by mlcs_sar"""
    exit_code = EXIT_RUNTIME


class ConfigError(MlcsError, ValueError):
    """Invalid experiment or radar configuration"""
    exit_code = EXIT_CONFIG


class ShapeError(MlcsError, ValueError):
    """Array shapes that do not fit together"""


class SwathError(MlcsError, ValueError):
    """Scene content outside the illuminated swath"""


class OperatorSizeError(MlcsError, ValueError):
    """Dense operator materialization above the configured cap"""


class AliasingError(MlcsError, ValueError):
    """Doppler bandwidth not supported by the PRF"""


class DegenerateRegionError(MlcsError, ValueError):
    """Region statistics undefined (too small or constant)"""


class SolverDivergenceError(MlcsError, RuntimeError):
    """Objective blew up during iterative reconstruction"""


class StageError(MlcsError, RuntimeError):
    """A pipeline stage failed; `stage` names it"""

    def __init__(self, stage: str, cause: Optional[BaseException] = None):
        self.stage = stage
        self.cause = cause
        message = f"stage '{stage}' failed"
        if cause is not None:
            message += f": {cause}"
        super().__init__(message)
        if isinstance(cause, ConfigError):
            self.exit_code = EXIT_CONFIG


class PartialSweepError(MlcsError, RuntimeError):
    """Some sweep cells failed; the others completed"""
    exit_code = EXIT_PARTIAL_SWEEP

    def __init__(self, failures, manifest=None):
        self.failures = list(failures)
        self.manifest = manifest
        super().__init__(f"{len(self.failures)} sweep run(s) failed")
