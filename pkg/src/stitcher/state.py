"""Symbolic machine state for guided simulation.

Registers hold expressions over entry atoms: ``Cell`` nodes for entry
memory contents and ``Sym`` nodes for stream bytes. Registers start at
zero. Memory is a list of stores over the entry image; payload variables are
stores made before the first block (``init``).
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field

from expr import Cell, Cmp, Const, Expr, Sym, atoms, binop, mask_to, size_mask
from errors import MachineFault
from resource_mapper import ResourceBinding, find_free_range, overlaps
from solvers.base import ConstraintSolver, Decision
from spl_frontend.interpreter import initial_bytes
from spl_frontend.ast import SplProgram
from target_model.model import REGISTERS, TargetProgram

logger = logging.getLogger(__name__)

INIT_STEP = -1
SCRATCH_CHUNK = 64

ENTRY_ROLE = "entry"
DISPATCHER = "dispatcher"
FUNCTIONAL = "functional"


@dataclass(frozen=True)
class MemStore:
    step: int
    block: int
    addr: int
    size: int
    value: Expr

    @property
    def init(self) -> bool:
        return self.step == INIT_STEP


@dataclass
class BlockRecord:
    """One executed block of a simulated path and the constraints it added."""

    block: int
    role: str
    stmt: int | None = None
    constraints: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        record: dict = {"block": hex(self.block), "role": self.role}
        if self.stmt is not None:
            record["stmt"] = self.stmt
        record["constraints"] = self.constraints
        return record


@dataclass(frozen=True)
class Witness:
    """Value of a conditional's register for one branch of the payload.

    ``forced`` witnesses were not reachable from the collected constraints;
    the register is set to the value when the clone enters the block.
    """

    stmt: int
    label: str
    vreg: int
    reg: str
    value: int
    forced: bool

    def as_dict(self) -> dict:
        return {
            "stmt": self.stmt,
            "label": self.label,
            "vreg": self.vreg,
            "reg": self.reg,
            "value": hex(self.value),
            "forced": self.forced,
        }


@dataclass
class SimState:
    """A path of the simulation.

    Attributes:
        regs: Register -> expression
        stores: Memory stores in execution order
        stack: Shadow call stack (return sites)
        constraints: C_w, the collected conjunction
        trace: Executed block ids
        log: Per-block records for trace dumps
        visited: Statement positions whose functional block was executed
        pins: (atom, value) concretizations made on the way
        stream_reads: (stream, symbol) in read order
        witnesses: Branch witnesses chosen at conditionals
        key: Set key of the last functional block (or ENTRY)
        block: Last functional block, None before the entry block runs
        terminal: Why the state stopped, None while it is still running
    """

    regs: dict[str, Expr]
    stores: list[MemStore] = field(default_factory=list)
    stack: tuple[int, ...] = ()
    constraints: list[Expr] = field(default_factory=list)
    trace: list[int] = field(default_factory=list)
    log: list[BlockRecord] = field(default_factory=list)
    visited: set[int] = field(default_factory=set)
    pins: list[tuple[Expr, int]] = field(default_factory=list)
    stream_reads: list[tuple[str, Sym]] = field(default_factory=list)
    witnesses: list[Witness] = field(default_factory=list)
    stdin_pos: int = 0
    key: object = None
    block: int | None = None
    terminal: str | None = None
    pending: object = None

    @classmethod
    def initial(cls, program: SplProgram, var_map: dict[str, int], key: object) -> "SimState":
        state = cls(regs={g: Const(0) for g in REGISTERS}, key=key)
        for name, addr in sorted(var_map.items(), key=lambda kv: kv[1]):
            data = initial_bytes(program, name, var_map)
            for offset in range(0, len(data), 8):
                chunk = data[offset : offset + 8]
                state.stores.append(
                    MemStore(INIT_STEP, -1, addr + offset, len(chunk), Const(int.from_bytes(chunk, "little")))
                )
        return state

    def copy(self) -> "SimState":
        return SimState(
            regs=dict(self.regs),
            stores=list(self.stores),
            stack=self.stack,
            constraints=list(self.constraints),
            trace=list(self.trace),
            log=[BlockRecord(r.block, r.role, r.stmt, list(r.constraints)) for r in self.log],
            visited=set(self.visited),
            pins=list(self.pins),
            stream_reads=list(self.stream_reads),
            witnesses=list(self.witnesses),
            stdin_pos=self.stdin_pos,
            key=self.key,
            block=self.block,
            terminal=self.terminal,
            pending=self.pending,
        )

    def env(self) -> dict[Expr, Expr]:
        return {Sym(g): value for g, value in self.regs.items()}

    def add_constraint(self, constraint: Expr) -> bool:
        """Append a constraint; False when it folds to false."""
        if isinstance(constraint, Const):
            return constraint.value != 0
        if constraint not in self.constraints:
            self.constraints.append(constraint)
            if self.log:
                self.log[-1].constraints.append(str(constraint))
        return True

    def constraint_atoms(self) -> set[Expr]:
        found: set[Expr] = set()
        for constraint in self.constraints:
            found |= atoms(constraint)
        return found

    def stored_after_entry(self, addr: int, size: int) -> bool:
        return any(
            not s.init and addr < s.addr + s.size and s.addr < addr + size for s in self.stores
        )

    def read(self, ctx: "SimContext", addr: int, size: int) -> Expr:
        """Value of ``size`` bytes at ``addr``, little endian."""
        if not ctx.target.is_readable(addr, size):
            raise MachineFault(f"read of {size} bytes at unmapped address {addr:#x}", addr)
        latest = None
        for store in reversed(self.stores):
            if addr < store.addr + store.size and store.addr < addr + size:
                latest = store
                break
        if latest is None:
            return ctx.entry_value(addr, size)
        if latest.addr == addr and latest.size == size:
            return latest.value

        value: Expr = Const(0)
        for i in range(size):
            value = binop("|", value, binop("<<", self._byte(ctx, addr + i), Const(8 * i)))
        return value

    def _byte(self, ctx: "SimContext", addr: int) -> Expr:
        for store in reversed(self.stores):
            if store.addr <= addr < store.addr + store.size:
                shift = Const(8 * (addr - store.addr))
                return mask_to(binop(">>", store.value, shift), 1)
        return ctx.entry_value(addr, 1)

    def write(self, step: int, block: int, addr: int, size: int, value: Expr) -> None:
        self.stores.append(MemStore(step, block, addr, size, mask_to(value, size)))


class SimContext:
    """State shared by every path of one simulation.

    Entry cells and scratch chunks are global so that all terminal states
    agree on one memory image; ``snapshot``/``restore`` undo the
    registrations of a rejected dispatcher path.
    """

    def __init__(
        self,
        target: TargetProgram,
        binding: ResourceBinding,
        solver: ConstraintSolver,
        timeout_ms: int = 5000,
        static: Sequence[tuple[int, int]] = (),
    ):
        self.target = target
        self.binding = binding
        self.solver = solver
        self.timeout_ms = timeout_ms
        self.reserved = binding.reserved()
        self.static = list(static)
        self.cells: dict[int, Cell] = {}
        self.domains: dict[Expr, Expr] = {}
        self.scratch: list[tuple[int, int]] = []
        self.decisions = 0

    def snapshot(self) -> tuple:
        return dict(self.cells), dict(self.domains), list(self.scratch)

    def restore(self, snap: tuple) -> None:
        cells, domains, scratch = snap
        self.cells, self.domains, self.scratch = dict(cells), dict(domains), list(scratch)

    def decide(self, constraints: Sequence[Expr]) -> Decision:
        used: set[Expr] = set()
        for constraint in constraints:
            used |= atoms(constraint)
        extra = [self.domains[a] for a in sorted(used, key=str) if a in self.domains]
        self.decisions += 1
        return self.solver.decide(list(constraints) + extra, self.timeout_ms)

    def restrict(self, atom: Expr, size: int) -> None:
        if size < 8:
            self.domains[atom] = Cmp("<=u", atom, Const(size_mask(size)))

    def _register(self, addr: int, size: int) -> Cell:
        cell = Cell(addr, size)
        self.cells[addr] = cell
        self.restrict(cell, size)
        return cell

    def overlapping(self, addr: int, size: int) -> list[Cell]:
        return [c for c in self.cells.values() if addr < c.addr + c.size and c.addr < addr + size]

    def entry_value(self, addr: int, size: int) -> Expr:
        """Entry contents of an untouched range: a constant for read-only memory, else entry cells."""
        section = self.target.section_for(addr, size)
        if section is None or not section.readable:
            raise MachineFault(f"read of {size} bytes at unmapped address {addr:#x}", addr)
        if not section.writable:
            data = bytes(self.target.memory.get(addr + i, 0) for i in range(size))
            return Const(int.from_bytes(data, "little"))

        found = self.overlapping(addr, size)
        if not found:
            return self._register(addr, size)
        if len(found) == 1:
            cell = found[0]
            if cell.addr == addr and cell.size == size:
                return cell
            if cell.addr <= addr and addr + size <= cell.addr + cell.size:
                return mask_to(binop(">>", cell, Const(8 * (addr - cell.addr))), size)

        value: Expr = Const(0)
        for i in range(size):
            value = binop("|", value, binop("<<", self.entry_value(addr + i, 1), Const(8 * i)))
        return value

    def blocked(self) -> list[tuple[int, int]]:
        ranges = list(self.static) + list(self.reserved) + list(self.scratch)
        ranges.extend((c.addr, c.size) for c in self.cells.values())
        return ranges

    def allocate(self, size: int) -> int:
        """Reserve a fresh writable scratch chunk."""
        size = max(SCRATCH_CHUNK, (size + 7) // 8 * 8)
        addr = find_free_range(self.target, size, self.blocked())
        if addr is None:
            raise MachineFault(f"no writable space left for a {size}-byte scratch chunk")
        self.scratch.append((addr, size))
        logger.debug("Allocated scratch chunk", extra={"context": {"addr": hex(addr), "size": size}})
        return addr

    def is_reserved(self, addr: int, size: int) -> bool:
        return overlaps(addr, size, self.reserved)
