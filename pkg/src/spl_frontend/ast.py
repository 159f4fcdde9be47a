"""SPL program representation."""

from dataclasses import dataclass, field
from enum import Enum

NUM_VREGS = 8

REGMOD_OPS = ("+", "-", "*", "/", "&", "|", "~", "<<", ">>")
SPL_CMPS = ("==", "!=", ">", ">=", "<", "<=")

# SPL's binary `~` is exclusive or
SPL_TO_EXPR_OP = {"~": "^"}


class StmtKind(str, Enum):
    VARSET = "varset"
    REGSET = "regset"
    REGMOD = "regmod"
    MEMRD = "memrd"
    MEMWR = "memwr"
    CALL = "call"
    COND = "cond"
    JUMP = "jump"
    RETURNTO = "returnto"

    @property
    def blockless(self) -> bool:
        """Statements realized without a target block."""
        return self in (StmtKind.VARSET, StmtKind.JUMP, StmtKind.RETURNTO)


@dataclass(frozen=True)
class AddrOf:
    """``&var`` rvalue."""

    var: str

    def __str__(self) -> str:
        return f"&{self.var}"


Rvalue = int | AddrOf


@dataclass(frozen=True)
class VarDecl:
    """A payload variable.

    ``kind`` is ``int64`` (value is an rvalue), ``array`` (tuple of rvalues) or
    ``string`` (bytes, NUL terminated).
    """

    name: str
    kind: str
    value: Rvalue | tuple[Rvalue, ...] | bytes

    @property
    def size(self) -> int:
        """Size in bytes of the variable's initial contents."""
        if self.kind == "int64":
            return 8
        if self.kind == "array":
            return 8 * len(self.value)  # type: ignore[arg-type]
        return len(self.value)  # type: ignore[arg-type]

    @property
    def extent(self) -> int:
        """Size rounded up to whole 8-byte words."""
        return max(8, (self.size + 7) // 8 * 8)


@dataclass(frozen=True)
class Statement:
    """One SPL statement.

    Operand use per kind:
        VARSET: ``var``
        REGSET: ``reg`` and ``value`` (int or AddrOf)
        REGMOD: ``reg``, ``op``, ``value``
        MEMRD: ``reg`` = ``*src``
        MEMWR: ``*reg`` = ``src``
        CALL: ``name``, ``args``
        COND: ``reg``, ``op`` (cmpop), ``value``, ``label``
        JUMP: ``label``
        RETURNTO: ``value``
    """

    kind: StmtKind
    reg: int | None = None
    src: int | None = None
    value: Rvalue | None = None
    op: str | None = None
    var: str | None = None
    name: str | None = None
    args: tuple[int, ...] = ()
    label: str | None = None
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)

    @property
    def blockless(self) -> bool:
        return self.kind.blockless

    def reads(self) -> set[str]:
        """Resources (``r<N>`` registers and ``v:<name>`` variables) this statement reads."""
        used: set[str] = set()
        if self.kind == StmtKind.VARSET:
            return used
        if self.kind in (StmtKind.REGMOD, StmtKind.COND):
            used.add(f"r{self.reg}")
        if self.kind == StmtKind.REGSET and isinstance(self.value, AddrOf):
            used.add(f"v:{self.value.var}")
        if self.kind == StmtKind.MEMRD:
            used.add(f"r{self.src}")
            used.add("mem")
        if self.kind == StmtKind.MEMWR:
            used.add(f"r{self.reg}")
            used.add(f"r{self.src}")
        if self.kind == StmtKind.CALL:
            used.update(f"r{a}" for a in self.args)
            used.add("mem")
        return used

    def writes(self) -> set[str]:
        """Resources this statement writes."""
        if self.kind == StmtKind.VARSET:
            return {f"v:{self.var}"}
        if self.kind in (StmtKind.REGSET, StmtKind.REGMOD, StmtKind.MEMRD):
            return {f"r{self.reg}"}
        if self.kind == StmtKind.MEMWR:
            return {"mem"}
        if self.kind == StmtKind.CALL:
            return {"mem", "io"}
        return set()

    def vregs(self) -> set[int]:
        """Virtual registers mentioned by this statement."""
        regs = {r for r in (self.reg, self.src) if r is not None}
        regs.update(self.args)
        return regs

    def is_control(self) -> bool:
        return self.kind in (StmtKind.COND, StmtKind.JUMP, StmtKind.RETURNTO)


@dataclass(frozen=True)
class SplProgram:
    """A validated SPL payload."""

    statements: tuple[Statement, ...]
    labels: dict[str, int]
    variables: dict[str, VarDecl]

    def __hash__(self) -> int:
        return hash(self.statements)

    def label_at(self, index: int) -> list[str]:
        """Labels that point at statement ``index``."""
        return [name for name, target in self.labels.items() if target == index]

    def used_vregs(self) -> set[int]:
        regs: set[int] = set()
        for stmt in self.statements:
            regs |= stmt.vregs()
        return regs
