"""Exception hierarchy and diagnostics shared across the toolchain.

Every error that can be traced to a line of program text or input data
carries a :class:`SourceLoc` so callers can print ``file:line`` messages.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional


class SourceLoc(NamedTuple):
    file: str
    line: int

    def __str__(self) -> str:
        return f"{self.file}:{self.line}"


class Error(Exception):
    """Base class for all toolchain errors."""

    def __init__(self, message: str, loc: Optional[SourceLoc] = None):
        super().__init__(message)
        self.message = message
        self.loc = loc

    def __str__(self) -> str:
        if self.loc is not None:
            return f"{self.loc}: {self.message}"
        return self.message


# ---------------------------------------------------------------- program text

class ProgramSyntaxError(Error):
    """Malformed source line, unclosed block, or bad argument syntax."""


class CompileError(Error):
    """Any failure while lowering the AST to a flow graph."""


class UnboundVariableError(CompileError):
    pass


class UnknownOperatorError(CompileError):
    pass


class ArgumentError(CompileError):
    """Missing, excess, or badly typed operator argument."""


class RegexError(ArgumentError):
    pass


class IncludeCycleError(CompileError):
    pass


class InfiniteRecursionError(CompileError):
    pass


class ConfigError(Error):
    """Bad or missing run configuration (also raised at run time, e.g. a
    generator operator with no input bounds)."""


# ---------------------------------------------------------------- equations

class EquationError(Error):
    pass


class StackError(EquationError):
    """Stack underflow/overflow or leftover operands in an RPN program."""


class MathError(EquationError):
    """Division yielding a non-finite result, or any non-finite outcome."""


class EquationTypeError(EquationError):
    """Token not valid for the equation kind (e.g. '*' in a string equation)."""


class UnboundArgError(EquationError):
    """A record equation read an auxiliary value that has not been sampled."""


# ---------------------------------------------------------------- graphs

class CycleError(Error):
    """A cycle where an acyclic graph is required."""


# ---------------------------------------------------------------- data files

class DataFormatError(Error):
    pass


class ParseError(DataFormatError):
    pass


class HeaderError(DataFormatError):
    pass


class OrderError(DataFormatError):
    """Record times decreased within one input stream."""


class PatternError(Error):
    """Output file pattern cannot produce distinct file names."""


class IoError(Error):
    """Failure writing to a sink."""


# ---------------------------------------------------------------- execution

class EngineError(Error):
    pass


class TimeTravelError(EngineError):
    """An operator emitted a record below its own output frontier."""


class PendingOverflowError(EngineError):
    """The scheduler's pending-event count exceeded the configured cap."""


class MemoryLimitError(EngineError):
    """Materialized record count exceeded the configured cap."""


# ---------------------------------------------------------------- diagnostics

@dataclass(frozen=True)
class Diagnostic:
    severity: str                     # "error" | "warning"
    message: str
    loc: Optional[SourceLoc] = None

    def __str__(self) -> str:
        prefix = f"{self.loc}: " if self.loc is not None else ""
        return f"{prefix}{self.severity}: {self.message}"

    @property
    def is_error(self) -> bool:
        return self.severity == "error"
