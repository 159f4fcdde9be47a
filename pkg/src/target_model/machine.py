"""Concrete TIR machine with a shadow call stack."""

import logging
from collections.abc import Mapping
from dataclasses import dataclass, field

from errors import MachineFault
from expr import MASK64, Expr, Sym, evaluate, size_mask
from target_model.model import (
    ARG_REGS,
    NUM_GREGS,
    Block,
    Br,
    Call,
    ICall,
    IJmp,
    Jmp,
    LoadEffect,
    Ret,
    SetEffect,
    StoreEffect,
    Syscall,
    TargetProgram,
    call_arity,
)

logger = logging.getLogger(__name__)

STDIN_FD = 0
STDOUT_FD = 1


class _RegisterView(Mapping):
    """Valuation of ``Sym('gN')`` atoms backed by a register list."""

    def __init__(self, regs: list[int]):
        self.regs = regs

    def __getitem__(self, key: Expr) -> int:
        if isinstance(key, Sym) and key.name.startswith("g"):
            return self.regs[int(key.name[1:])]
        raise KeyError(key)

    def __iter__(self):
        return (Sym(f"g{i}") for i in range(NUM_GREGS))

    def __len__(self) -> int:
        return NUM_GREGS


@dataclass
class MachineState:
    regs: list[int]
    memory: dict[int, int]
    stdin: bytes = b""
    stdin_pos: int = 0
    call_stack: list[int] = field(default_factory=list)

    @classmethod
    def initial(
        cls,
        target: TargetProgram,
        writes: list[tuple[int, int, int]] | None = None,
        stdin: bytes = b"",
        regs: Mapping[str, int] | None = None,
    ) -> "MachineState":
        """Entry state: zero registers, initial memory overlaid with ``(addr, value, size)`` writes."""
        memory = dict(target.memory)
        for addr, value, size in writes or []:
            for i, byte in enumerate((value & MASK64).to_bytes(8, "little")[:size]):
                memory[addr + i] = byte
        registers = [0] * NUM_GREGS
        for name, value in (regs or {}).items():
            registers[int(name[1:])] = value & MASK64
        return cls(registers, memory, stdin)

    def reg(self, name: str) -> int:
        return self.regs[int(name[1:])]

    def copy(self) -> "MachineState":
        return MachineState(
            list(self.regs), dict(self.memory), self.stdin, self.stdin_pos, list(self.call_stack)
        )


@dataclass(frozen=True)
class Event:
    """An I/O event or a fault.

    ``kind`` is ``call`` (external call), ``syscall`` or ``fault``.
    """

    kind: str
    block: int
    name: str = ""
    args: tuple[int, ...] = ()
    data: bytes = b""
    addr: int | None = None
    step: int = 0


@dataclass(frozen=True)
class Store:
    step: int
    block: int
    addr: int
    size: int
    value: int


@dataclass
class Trace:
    """Result of a concrete run.

    Attributes:
        blocks: Executed block ids in order
        transitions: (src, dst, kind) per control transfer, kind as in CFG_A
        events: External calls, syscalls and faults
        stores: Every memory store, with the step index of its block
        registers: Register file before each executed block (when recorded)
        state: Final machine state
        exit: ``ret`` (returned from the entry frame), ``exit``, ``fault`` or ``fuel``
        stdout: Bytes written to fd 1
    """

    blocks: list[int] = field(default_factory=list)
    transitions: list[tuple[int, int, str]] = field(default_factory=list)
    events: list[Event] = field(default_factory=list)
    stores: list[Store] = field(default_factory=list)
    registers: list[tuple[int, ...]] = field(default_factory=list)
    state: MachineState | None = None
    exit: str = "ret"
    stdout: bytes = b""

    @property
    def fault(self) -> Event | None:
        faults = [e for e in self.events if e.kind == "fault"]
        return faults[-1] if faults else None


def _read(target: TargetProgram, state: MachineState, addr: int, size: int) -> int:
    if not target.is_readable(addr, size):
        raise MachineFault(f"read of {size} bytes at unmapped address {addr:#x}", addr)
    data = bytes(state.memory.get(addr + i, 0) for i in range(size))
    return int.from_bytes(data, "little")


def _write(target: TargetProgram, state: MachineState, addr: int, size: int, value: int) -> None:
    if not target.is_writable(addr, size):
        raise MachineFault(f"write of {size} bytes at non-writable address {addr:#x}", addr)
    for i, byte in enumerate((value & MASK64).to_bytes(8, "little")[:size]):
        state.memory[addr + i] = byte


def run_effects(
    target: TargetProgram, block: Block, state: MachineState
) -> list[tuple[int, int, int]]:
    """Execute a block's straight-line effects in place.

    Returns:
        The (addr, size, value) stores performed

    Raises:
        MachineFault: On an invalid memory access or a division by zero
    """
    view = _RegisterView(state.regs)
    stores = []
    try:
        for effect in block.effects:
            if isinstance(effect, SetEffect):
                state.regs[int(effect.reg[1:])] = evaluate(effect.value, view)
            elif isinstance(effect, LoadEffect):
                addr = evaluate(effect.addr, view)
                state.regs[int(effect.reg[1:])] = _read(target, state, addr, effect.size)
            elif isinstance(effect, StoreEffect):
                addr = evaluate(effect.addr, view)
                value = evaluate(effect.value, view) & size_mask(effect.size)
                _write(target, state, addr, effect.size, value)
                stores.append((addr, effect.size, value))
    except ZeroDivisionError as e:
        raise MachineFault(f"division by zero in block {block.id:#x}", block=block.id) from e
    return stores


def _external(
    target: TargetProgram, state: MachineState, name: str, block: int, step: int, kind: str
) -> tuple[Event, bytes, bool]:
    """Model an external call: record it, perform write/read I/O, leave registers unchanged."""
    args = tuple(state.reg(r) for r in ARG_REGS[: call_arity(name)])
    out = b""
    if name == "write" and args[0] == STDOUT_FD:
        out = bytes(_read(target, state, args[1] + i, 1) for i in range(args[2]))
    elif name == "read" and args[0] == STDIN_FD:
        chunk = state.stdin[state.stdin_pos : state.stdin_pos + args[2]]
        state.stdin_pos += len(chunk)
        for i, byte in enumerate(chunk):
            _write(target, state, args[1] + i, 1, byte)
    return Event(kind, block, name, args, out, step=step), out, name == "exit"


def execute_concrete(
    target: TargetProgram,
    entry: int,
    state: MachineState | None = None,
    fuel: int = 10_000,
    record_registers: bool = False,
    overrides: Mapping[int, Mapping[str, int]] | None = None,
) -> Trace:
    """Run the target from ``entry``.

    Returns go to the dynamically matching call site; ``ret`` with an empty
    call stack ends the run. Faults are recorded as events and end the run.

    Args:
        target: Program to run
        entry: First block
        state: Entry state (``MachineState.initial(target)`` when None)
        fuel: Maximum number of executed blocks
        record_registers: Keep the register file before every block
        overrides: Block id -> {register: value} set on the first visit of
            that block, before it runs

    Returns:
        The trace, including the final state
    """
    if fuel < 1:
        raise ValueError("fuel must be >= 1")
    if entry not in target.blocks:
        raise ValueError(f"unknown entry block {entry:#x}")
    state = state if state is not None else MachineState.initial(target)
    trace = Trace(state=state)
    stdout = bytearray()
    pending = {block: dict(values) for block, values in (overrides or {}).items()}
    current: int | None = entry

    while current is not None:
        if len(trace.blocks) >= fuel:
            trace.exit = "fuel"
            break
        step = len(trace.blocks)
        block = target.blocks[current]
        for name, value in pending.pop(current, {}).items():
            state.regs[int(name[1:])] = value & MASK64
        trace.blocks.append(current)
        if record_registers:
            trace.registers.append(tuple(state.regs))
        try:
            for addr, size, value in run_effects(target, block, state):
                trace.stores.append(Store(step, current, addr, size, value))
            current = _transfer(target, block, state, trace, stdout, step)
        except MachineFault as fault:
            trace.events.append(
                Event("fault", block.id, str(fault), addr=fault.addr, step=step)
            )
            trace.exit = "fault"
            logger.debug(
                "Concrete execution faulted",
                extra={"context": {"block": hex(block.id), "fault": str(fault)}},
            )
            break

    trace.stdout = bytes(stdout)
    return trace


def _transfer(
    target: TargetProgram,
    block: Block,
    state: MachineState,
    trace: Trace,
    stdout: bytearray,
    step: int,
) -> int | None:
    term = block.terminator
    view = _RegisterView(state.regs)
    nxt: int | None
    if isinstance(term, Jmp):
        nxt, kind = term.target, "jmp"
    elif isinstance(term, Br):
        taken = evaluate(term.cond, view) != 0
        nxt = term.taken if taken else term.fall
        kind = "branch" if term.taken == term.fall else ("taken" if taken else "fall")
    elif isinstance(term, (Call, ICall)):
        if isinstance(term, ICall):
            value = state.reg(term.reg)
            callees = [c for c in term.callees if target.functions[c].entry == value]
            if not callees:
                raise MachineFault(f"indirect call to {value:#x} outside its target set", value)
            callee = callees[0]
        else:
            callee = term.callee
        if target.is_external(callee):
            event, out, stop = _external(target, state, callee, block.id, step, "call")
            trace.events.append(event)
            stdout.extend(out)
            if stop:
                trace.exit = "exit"
                return None
            nxt, kind = term.ret, "extcall"
        else:
            state.call_stack.append(term.ret)
            nxt, kind = target.functions[callee].entry, "call"
    elif isinstance(term, Syscall):
        event, out, stop = _external(target, state, term.name, block.id, step, "syscall")
        trace.events.append(event)
        stdout.extend(out)
        if stop:
            trace.exit = "exit"
            return None
        nxt, kind = term.next, "syscall"
    elif isinstance(term, IJmp):
        value = state.reg(term.reg)
        if value not in term.targets:
            raise MachineFault(f"indirect jump to {value:#x} outside its target set", value)
        nxt, kind = value, "ijmp"
    elif isinstance(term, Ret):
        if not state.call_stack:
            trace.exit = "ret"
            return None
        nxt, kind = state.call_stack.pop(), "ret"
    else:
        raise TypeError(f"unknown terminator {term!r}")
    trace.transitions.append((block.id, nxt, kind))
    return nxt

