"""
esrcontrol Core - Errors

Exception hierarchy shared by every layer. Value-level problems also derive
from ``ValueError`` so callers catching builtins keep working.
"""

from typing import Optional


class ControlError(Exception):
    """Base class for all esrcontrol errors."""


class InvalidBasisError(ControlError, ValueError):
    """Basis parameters cannot produce a valid basis set."""


class TransferGridError(ControlError, ValueError):
    """A transfer function grid does not cover a pulse's spectral support."""


class DimensionMismatchError(ControlError, ValueError):
    """Operators or states of different Hilbert dimensions were combined."""


class RunAbortedError(ControlError, RuntimeError):
    """An optimization run hit a non-finite fidelity or gradient."""


class ConfigError(ControlError, ValueError):
    """
    Invalid experiment configuration.

    Args:
        message: Human readable description
        field: Dotted path of the offending field, if known
        line: 1-based line number in the config file, if known
    """

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        self.message = message
        self.field = field
        self.line = line
        super().__init__(str(self))

    def __str__(self) -> str:
        where = []
        if self.line is not None:
            where.append(f"line {self.line}")
        if self.field:
            where.append(self.field)
        prefix = f"[{', '.join(where)}] " if where else ""
        return f"{prefix}{self.message}"
