"""Error hierarchy and failure taxonomy for bop-forge."""

from enum import Enum


class BopForgeError(Exception):
    """Base class for every error raised by bop-forge."""


class SplSyntaxError(BopForgeError):
    """Malformed SPL source.

    Args:
        message: Human readable description
        line: 1-based line of the offending token
        col: 1-based column of the offending token
        filename: Source file name used when rendering the diagnostic
    """

    def __init__(self, message: str, line: int = 0, col: int = 0, filename: str = "<spl>"):
        super().__init__(message)
        self.message = message
        self.line = line
        self.col = col
        self.filename = filename

    def render(self) -> str:
        """Render the diagnostic as ``file:line:col: message``."""
        return f"{self.filename}:{self.line}:{self.col}: {self.message}"

    def __str__(self) -> str:
        return self.render()


class SplSemanticError(SplSyntaxError):
    """Well-formed SPL that violates a semantic rule (labels, registers, names)."""


class SplRuntimeError(BopForgeError):
    """Raised by the reference interpreter (bad dereference, division by zero)."""


class TirSyntaxError(BopForgeError):
    """Malformed TIR text."""

    def __init__(self, message: str, line: int = 0):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


class TirLinkError(BopForgeError):
    """TIR that parses but does not link (duplicate ids, dangling targets, overlaps)."""


class MachineFault(BopForgeError):
    """A concrete or symbolic memory access outside the rules of the sections."""

    def __init__(self, message: str, addr: int | None = None, block: int | None = None):
        super().__init__(message)
        self.addr = addr
        self.block = block


class SimulationAbort(BopForgeError):
    """Aborts the dispatcher path currently being simulated."""


class CellAlreadySet(SimulationAbort):
    """A dereferenced cell was already written after the entry point."""


class UnsatAfterConcretization(SimulationAbort):
    """Fixing a symbolic value made the collected constraints unsatisfiable."""


class WriteSetError(BopForgeError):
    """A write-set that cannot be applied: overlapping entries, read-only targets or bad records."""


class FailureKind(Enum):
    """Failure classes of a compile run, ordered by pipeline depth."""

    NO_CANDIDATES = (1, 3, "not enough candidate blocks")
    NO_MAPPING = (2, 4, "no valid register/variable mappings")
    NO_PATH = (3, 5, "no valid paths between functional blocks")
    UNSAT = (4, 6, "unsatisfiable constraints or solver timeout")

    def __init__(self, depth: int, exit_code: int, description: str):
        self.depth = depth
        self.exit_code = exit_code
        self.description = description


class PipelineFailure(BopForgeError):
    """A compile stage could not make progress.

    Args:
        kind: Failure class
        message: Explanation, usually naming the statement or edge involved
        statement: Index of the statement that caused the failure, when known
    """

    def __init__(self, kind: FailureKind, message: str, statement: int | None = None):
        super().__init__(f"{kind.name}: {message}")
        self.kind = kind
        self.message = message
        self.statement = statement


class NoCandidate(PipelineFailure):
    """No block matches a statement."""

    def __init__(self, statement: int, message: str):
        super().__init__(FailureKind.NO_CANDIDATES, message, statement)


class Unsatisfiable(PipelineFailure):
    """A resource binding leaves a statement without functional blocks."""

    def __init__(self, statement: int | None, message: str):
        super().__init__(FailureKind.NO_MAPPING, message, statement)


EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2
EXIT_VERIFY_FAIL = 7
EXIT_INPUT = 8
