"""Reference interpreter for SPL, used as the semantics oracle."""

import logging
from collections import Counter
from collections.abc import Mapping
from dataclasses import dataclass, field

from errors import SplRuntimeError
from expr import MASK64, apply_op, compare
from spl_frontend.ast import NUM_VREGS, SPL_TO_EXPR_OP, AddrOf, Rvalue, SplProgram, StmtKind

logger = logging.getLogger(__name__)

DEFAULT_VAR_BASE = 0x10000
STDIN_FD = 0
STDOUT_FD = 1


def layout_variables(program: SplProgram, base: int = DEFAULT_VAR_BASE) -> dict[str, int]:
    """Place variables consecutively from ``base``, 8-byte aligned, in declaration order."""
    layout: dict[str, int] = {}
    cursor = (base + 7) // 8 * 8
    for name, decl in program.variables.items():
        layout[name] = cursor
        cursor += decl.extent
    return layout


def resolve_rvalue(value: Rvalue, layout: Mapping[str, int]) -> int:
    if isinstance(value, AddrOf):
        return layout[value.var]
    return value & MASK64


def initial_bytes(program: SplProgram, name: str, layout: Mapping[str, int]) -> bytes:
    """Initial contents of a variable under ``layout``."""
    decl = program.variables[name]
    if decl.kind == "string":
        return bytes(decl.value)  # type: ignore[arg-type]
    if decl.kind == "array":
        items = decl.value
    else:
        items = (decl.value,)
    return b"".join(
        resolve_rvalue(item, layout).to_bytes(8, "little") for item in items  # type: ignore[union-attr]
    )


@dataclass(frozen=True)
class ExitReason:
    kind: str
    addr: int | None = None

    def __str__(self) -> str:
        return f"returnto({self.addr:#x})" if self.kind == "returnto" else self.kind


@dataclass(frozen=True)
class CallEvent:
    name: str
    args: tuple[int, ...]


@dataclass(frozen=True)
class Step:
    """One executed statement with the register file around it."""

    index: int
    before: tuple[int, ...]
    after: tuple[int, ...]


@dataclass
class SplResult:
    registers: tuple[int, ...]
    memory: dict[str, bytes]
    stdout: bytes
    exit: ExitReason
    events: list[CallEvent] = field(default_factory=list)
    steps: list[Step] = field(default_factory=list)
    visits: Counter = field(default_factory=Counter)


class _VariableMemory:
    def __init__(self, program: SplProgram, layout: Mapping[str, int]):
        self.layout = dict(layout)
        self.extents = {
            name: (addr, addr + program.variables[name].extent) for name, addr in layout.items()
        }
        self.bytes: dict[int, int] = {}
        for name, addr in self.layout.items():
            for offset, byte in enumerate(initial_bytes(program, name, layout)):
                self.bytes[addr + offset] = byte

    def owner(self, addr: int) -> str | None:
        for name, (lo, hi) in self.extents.items():
            if lo <= addr < hi:
                return name
        return None

    def load(self, addr: int, size: int = 8) -> int:
        if self.owner(addr) is None:
            raise SplRuntimeError(f"dereference of non-variable address {addr:#x}")
        data = bytes(self.bytes.get(addr + i, 0) for i in range(size))
        return int.from_bytes(data, "little")

    def store(self, addr: int, value: int, size: int = 8) -> None:
        owner = self.owner(addr)
        if owner is None or self.owner(addr + size - 1) != owner:
            raise SplRuntimeError(f"store to non-variable address {addr:#x}")
        for i, byte in enumerate((value & MASK64).to_bytes(8, "little")[:size]):
            self.bytes[addr + i] = byte

    def read_block(self, addr: int, length: int) -> bytes:
        if length and self.owner(addr) is None:
            raise SplRuntimeError(f"dereference of non-variable address {addr:#x}")
        return bytes(self.bytes.get(addr + i, 0) for i in range(length))

    def write_block(self, addr: int, data: bytes) -> None:
        for i, byte in enumerate(data):
            if self.owner(addr + i) is None:
                raise SplRuntimeError(f"store to non-variable address {addr + i:#x}")
            self.bytes[addr + i] = byte

    def snapshot(self) -> dict[str, bytes]:
        return {
            name: bytes(self.bytes.get(a, 0) for a in range(lo, hi))
            for name, (lo, hi) in self.extents.items()
        }


def interpret_spl(
    program: SplProgram,
    stdin: bytes = b"",
    fuel: int = 10_000,
    layout: Mapping[str, int] | None = None,
    overrides: Mapping[int, Mapping[int, int]] | None = None,
    record: bool = False,
) -> SplResult:
    """Execute a payload directly.

    Variables are initialized before the first statement, as the memory writes
    of the real attack complete before the payload runs.

    Args:
        program: Payload to run
        stdin: Bytes consumed by ``read`` calls on fd 0
        fuel: Maximum number of executed statements
        layout: Variable addresses; defaults to ``layout_variables(program)``
        overrides: Statement index -> {vreg: value} applied on the first visit of
            that statement, before it executes
        record: Keep a per-statement register history in ``steps``

    Returns:
        Final registers, variable contents, stdout and the exit reason

    Raises:
        SplRuntimeError: Bad dereference or division by zero
    """
    layout = dict(layout) if layout is not None else layout_variables(program)
    memory = _VariableMemory(program, layout)
    regs = [0] * NUM_VREGS
    stdout = bytearray()
    stdin_pos = 0
    result = SplResult((), {}, b"", ExitReason("end"))
    pending = {index: dict(values) for index, values in (overrides or {}).items()}
    pc = 0
    executed = 0
    statements = program.statements
    exit_reason = ExitReason("end")

    while pc < len(statements):
        if executed >= fuel:
            exit_reason = ExitReason("fuel-exhausted")
            break
        executed += 1
        stmt = statements[pc]
        if pc in pending:
            for vreg, value in pending.pop(pc).items():
                regs[vreg] = value & MASK64
        result.visits[pc] += 1
        before = tuple(regs)
        next_pc = pc + 1
        kind = stmt.kind

        if kind == StmtKind.REGSET:
            regs[stmt.reg] = resolve_rvalue(stmt.value, layout)  # type: ignore[arg-type,index]
        elif kind == StmtKind.REGMOD:
            op = SPL_TO_EXPR_OP.get(stmt.op, stmt.op)  # type: ignore[arg-type]
            try:
                regs[stmt.reg] = apply_op(op, regs[stmt.reg], stmt.value)  # type: ignore[arg-type,index]
            except ZeroDivisionError as e:
                raise SplRuntimeError(f"division by zero at statement {pc}") from e
        elif kind == StmtKind.MEMRD:
            regs[stmt.reg] = memory.load(regs[stmt.src])  # type: ignore[index]
        elif kind == StmtKind.MEMWR:
            memory.store(regs[stmt.reg], regs[stmt.src])  # type: ignore[index]
        elif kind == StmtKind.CALL:
            args = tuple(regs[a] for a in stmt.args)
            result.events.append(CallEvent(stmt.name, args))  # type: ignore[arg-type]
            if stmt.name == "write" and len(args) == 3:
                data = memory.read_block(args[1], args[2])
                if args[0] == STDOUT_FD:
                    stdout.extend(data)
            elif stmt.name == "read" and len(args) == 3 and args[0] == STDIN_FD:
                chunk = stdin[stdin_pos : stdin_pos + args[2]]
                stdin_pos += len(chunk)
                memory.write_block(args[1], chunk)
        elif kind == StmtKind.COND:
            if compare(stmt.op, regs[stmt.reg], stmt.value):  # type: ignore[arg-type,index]
                next_pc = program.labels[stmt.label]  # type: ignore[index]
        elif kind == StmtKind.JUMP:
            next_pc = program.labels[stmt.label]  # type: ignore[index]
        elif kind == StmtKind.RETURNTO:
            exit_reason = ExitReason("returnto", stmt.value)  # type: ignore[arg-type]
            if record:
                result.steps.append(Step(pc, before, tuple(regs)))
            break

        if record:
            result.steps.append(Step(pc, before, tuple(regs)))
        pc = next_pc

    result.registers = tuple(regs)
    result.memory = memory.snapshot()
    result.stdout = bytes(stdout)
    result.exit = exit_reason
    logger.debug(
        "SPL interpretation finished",
        extra={"context": {"exit": str(exit_reason), "executed": executed}},
    )
    return result
