"""
Exception hierarchy for the RLNC/TDD queueing toolkit.

Every error carries an ``error_type`` label so the CLI can emit the same
``{"error": ..., "type": ...}`` payloads for library and usage failures.
"""

from typing import Optional


class RlncTddError(Exception):
    """Base class for all errors raised by the package."""

    error_type = "Error"


class ConfigError(RlncTddError, ValueError):
    """Invalid configuration file, key, value or CLI argument combination."""

    error_type = "ConfigError"

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line else f"{path}: "
        super().__init__(f"{location}{message}")


class PreconditionError(RlncTddError, ValueError):
    """An operation was called outside its domain (e.g. N_i < i)."""

    error_type = "PreconditionError"


class DivergenceError(RlncTddError, ArithmeticError):
    """A geometric factor does not converge (P_ii = 1, or P_ii·e^{sT} >= 1)."""

    error_type = "DivergenceError"


class ToleranceNotReachedError(RlncTddError, ArithmeticError):
    """A truncated computation could not meet its tolerance within its cap."""

    error_type = "ToleranceNotReached"


class SingularChainError(RlncTddError, ArithmeticError):
    """The embedded chain is reducible; no unique stationary vector exists."""

    error_type = "SingularChain"


class InstabilityError(RlncTddError):
    """Raised by the CLI when an unstable configuration must be treated as failure."""

    error_type = "Unstable"
