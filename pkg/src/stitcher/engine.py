"""Guided symbolic simulation along dispatcher paths (stitching).

The walk follows the bundles of an induced subgraph from the entry block.
Each bundle tries up to K dispatcher paths in order; the first whose blocks
execute without a fault and whose collected constraints stay satisfiable is
kept. Conditional statements clone the state, one clone per branch of the
payload. A state ends when it reaches a functional block it already executed
(loop closure), a ``returnto`` block, or the end of the payload.
"""

import logging
from collections.abc import Hashable
from dataclasses import dataclass, field

import networkx as nx

from delta_graph import ENTRY, EXIT, Bundle, DeltaGraph, InducedSubgraph
from errors import (
    CellAlreadySet,
    FailureKind,
    MachineFault,
    PipelineFailure,
    SimulationAbort,
    UnsatAfterConcretization,
)
from expr import (
    BinOp,
    Cell,
    Const,
    Expr,
    Load,
    Sym,
    atoms,
    binop,
    cmp,
    evaluate,
    linear_form,
    mask_to,
    negate,
    substitute,
    subterms,
    u64,
)
from paths import k_shortest_dispatcher_paths
from resource_mapper import ResourceBinding, static_cells
from solvers.base import ConstraintSolver, Sat, Unsat, as_condition
from spl_frontend.ast import SPL_TO_EXPR_OP, AddrOf, StmtKind
from spl_frontend.ir import FALL, TAKEN, StatementIR
from stitcher.state import (
    DISPATCHER,
    ENTRY_ROLE,
    FUNCTIONAL,
    BlockRecord,
    SimContext,
    SimState,
    Witness,
)
from target_model.model import (
    ARG_REGS,
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
from target_model.summary import BlockSummary
from tracing_config import custom_span

logger = logging.getLogger(__name__)

STDIN_FD = 0
STDIN = "stdin"


@dataclass
class StitchStats:
    paths_tried: int = 0
    paths_rejected: int = 0
    longest_dispatcher: int = 0
    states: int = 0
    decisions: int = 0

    def as_dict(self) -> dict:
        return {
            "paths_tried": self.paths_tried,
            "paths_rejected": self.paths_rejected,
            "longest_dispatcher": self.longest_dispatcher,
            "states": self.states,
            "decisions": self.decisions,
        }


@dataclass
class Solution:
    """A satisfiable stitching of one induced subgraph.

    Attributes:
        ir: Payload the solution realizes
        binding: Registers and variable addresses used
        plan: Statement position -> functional block
        terminals: Final states, one per payload branch
        constraints: Union of the terminal conjunctions
        model: Satisfying assignment of ``constraints``
        cells: Entry cells the constraints mention, ascending address
        witnesses: Branch witnesses of every conditional
        stats: Search counters
    """

    ir: StatementIR
    binding: ResourceBinding
    entry: int
    plan: dict[int, int]
    terminals: list[SimState]
    constraints: list[Expr]
    model: dict[Expr, int]
    cells: list[Cell] = field(default_factory=list)
    witnesses: list[Witness] = field(default_factory=list)
    stats: StitchStats = field(default_factory=StitchStats)
    subgraph_rank: int = 0

    def stream_symbols(self) -> list[Sym]:
        """stdin symbols in stream order."""
        seen: dict[str, Sym] = {}
        for state in self.terminals:
            for _, symbol in state.stream_reads:
                seen.setdefault(symbol.name, symbol)
        return sorted(seen.values(), key=lambda s: int(s.name.rsplit("_", 1)[1]))

    def value_of(self, atom: Expr) -> int:
        return self.model.get(atom, 0)

    def trace_json(self) -> dict:
        return {
            "entry": hex(self.entry),
            "plan": {str(k): hex(v) for k, v in sorted(self.plan.items())},
            "states": [
                {
                    "terminal": state.terminal,
                    "blocks": [record.as_dict() for record in state.log],
                    "pins": [[str(a), hex(v)] for a, v in state.pins],
                }
                for state in self.terminals
            ],
            "constraints": [str(c) for c in self.constraints],
            "model": {str(a): hex(v) for a, v in sorted(self.model.items(), key=lambda kv: str(kv[0]))},
            "witnesses": [w.as_dict() for w in self.witnesses],
            "stats": self.stats.as_dict(),
        }


def _decide_sat(ctx: SimContext, constraints: list[Expr]) -> dict[Expr, int] | None:
    decision = ctx.decide(constraints)
    return decision.model if isinstance(decision, Sat) else None


def _pin(state: SimState, atom: Expr, value: int) -> None:
    state.add_constraint(cmp("==", atom, Const(value)))
    state.pins.append((atom, value))


def concretize_value(state: SimState, ctx: SimContext, value: Expr) -> int:
    """Fix every atom of ``value`` to a model value and return the result."""
    if isinstance(value, Const):
        return value.value
    model = _decide_sat(ctx, state.constraints)
    if model is None:
        raise UnsatAfterConcretization(f"no model to concretize {value}")
    valuation = {a: model.get(a, 0) for a in atoms(value)}
    for atom, v in sorted(valuation.items(), key=lambda kv: str(kv[0])):
        _pin(state, atom, v)
    return evaluate(value, valuation)


def concretize_address(state: SimState, ctx: SimContext, addr: Expr, size: int) -> int:
    """Resolve a symbolic address.

    ``atom + c`` keeps the atom when the constraints force it; otherwise the
    atom is pointed at a fresh scratch chunk. Other shapes are fixed to a
    model value.
    """
    if isinstance(addr, Const):
        return addr.value
    if any(isinstance(node, Load) for node in subterms(addr)):
        raise MachineFault(f"unresolved load in address {addr}")
    form = linear_form(addr)
    if form is None:
        return concretize_value(state, ctx, addr)

    atom, offset = form
    model = _decide_sat(ctx, state.constraints)
    if model is None:
        raise UnsatAfterConcretization(f"no model to concretize {addr}")
    current = model.get(atom, 0)
    if atom in state.constraint_atoms():
        probe = ctx.decide(state.constraints + [cmp("!=", atom, Const(current))])
        if isinstance(probe, Unsat):
            return u64(current + offset)

    base = ctx.allocate(abs(offset) + size)
    pointer = base + max(0, -offset)
    if _decide_sat(ctx, state.constraints + [cmp("==", atom, Const(pointer))]) is not None:
        _pin(state, atom, pointer)
        return base + max(0, offset)
    _pin(state, atom, current)
    return u64(current + offset)


def concretize_before_functional(
    state: SimState, ctx: SimContext, deref: tuple[tuple[Expr, int], ...]
) -> SimState:
    """Resolve the D_M cells of the next functional block before it runs.

    Raises:
        CellAlreadySet: A cell was written after the entry point
        UnsatAfterConcretization: Resolving an address left no model
    """
    env = state.env()
    for addr_expr, size in deref:
        addr_value = substitute(addr_expr, env)
        if any(isinstance(node, Load) for node in subterms(addr_value)):
            continue
        addr = concretize_address(state, ctx, addr_value, size)
        if state.stored_after_entry(addr, size):
            raise CellAlreadySet(f"cell {addr:#x}:{size} was already set after the entry point")
        state.read(ctx, addr, size)
    return state


def concretize_on_overwrite(state: SimState, ctx: SimContext, addr: int, size: int, value: Expr) -> SimState:
    """Pin entry cells under a store before the store hides them.

    Constrained cells take a model value; unconstrained cells a register
    still holds get a scratch pointer. Cells that survive in ``value`` are
    left alone.

    Raises:
        UnsatAfterConcretization: No model exists for the constraints
    """
    kept = atoms(value)
    constrained = state.constraint_atoms()
    referenced: set[Expr] = set()
    for reg_value in state.regs.values():
        referenced |= atoms(reg_value)
    for cell in sorted(ctx.overlapping(addr, size), key=lambda c: c.addr):
        if cell in kept or any(a == cell for a, _ in state.pins):
            continue
        if cell in constrained:
            model = _decide_sat(ctx, state.constraints)
            if model is None:
                raise UnsatAfterConcretization(f"no model for {cell} before it is overwritten")
            _pin(state, cell, model.get(cell, 0))
        elif cell in referenced and cell.size == 8:
            pointer = ctx.allocate(8)
            _pin(state, cell, pointer)
    return state


def _has_zero_division(value: Expr) -> bool:
    return any(
        isinstance(node, BinOp) and node.op == "/" and node.right == Const(0) for node in subterms(value)
    )


class Stitcher:
    """One simulation of an induced subgraph under a resource binding."""

    def __init__(
        self,
        ir: StatementIR,
        dg: DeltaGraph,
        hk: InducedSubgraph,
        target: TargetProgram,
        binding: ResourceBinding,
        cfg: nx.DiGraph,
        solver: ConstraintSolver,
        entry: int,
        k: int = 8,
        limit: int = 128,
        timeout_ms: int = 5000,
        summaries: dict[int, BlockSummary] | None = None,
        stats: StitchStats | None = None,
    ):
        self.ir = ir
        self.program = ir.program
        self.dg = dg
        self.hk = hk
        self.selection = hk.as_dict()
        self.target = target
        self.binding = binding
        self.cfg = cfg
        self.entry = entry
        self.k = k
        self.limit = limit
        self.ctx = SimContext(target, binding, solver, timeout_ms, static_cells(target, summaries))
        self.stats = stats if stats is not None else StitchStats()
        self.step = 0

    def _out_bundles(self, key: Hashable) -> list[Bundle]:
        return [b for b in self.dg.bundles if b.src == key]

    def _next_step(self) -> int:
        self.step += 1
        return self.step

    def _store(self, state: SimState, block: int, addr: int, size: int, value: Expr, allow_reserved: bool) -> None:
        if not self.target.is_writable(addr, size):
            raise MachineFault(f"write of {size} bytes at non-writable address {addr:#x}", addr, block)
        if not allow_reserved and self.ctx.is_reserved(addr, size):
            raise SimulationAbort(f"block {block:#x} stores into a payload variable at {addr:#x}")
        concretize_on_overwrite(state, self.ctx, addr, size, value)
        state.write(self._next_step(), block, addr, size, value)

    def execute_block(
        self, state: SimState, block_id: int, role: str, stmt: int | None = None, allow_reserved: bool = False
    ) -> None:
        """Run a block's effects and external I/O on ``state``.

        Raises:
            MachineFault: Invalid memory access or division by zero
            SimulationAbort: Store into a payload variable, or no model left
        """
        block = self.target.blocks[block_id]
        state.trace.append(block_id)
        state.log.append(BlockRecord(block_id, role, stmt))
        for effect in block.effects:
            env = state.env()
            if isinstance(effect, SetEffect):
                value = substitute(effect.value, env)
                if _has_zero_division(value):
                    raise MachineFault(f"division by zero in block {block_id:#x}", block=block_id)
                state.regs[effect.reg] = value
            elif isinstance(effect, LoadEffect):
                addr = concretize_address(state, self.ctx, substitute(effect.addr, env), effect.size)
                state.regs[effect.reg] = state.read(self.ctx, addr, effect.size)
            elif isinstance(effect, StoreEffect):
                addr = concretize_address(state, self.ctx, substitute(effect.addr, env), effect.size)
                value = mask_to(substitute(effect.value, env), effect.size)
                self._store(state, block_id, addr, effect.size, value, allow_reserved)

        term = block.terminator
        if isinstance(term, Call) and self.target.is_external(term.callee):
            self._external(state, block_id, term.callee, allow_reserved)
        elif isinstance(term, Syscall):
            self._external(state, block_id, term.name, allow_reserved)

    def _external(self, state: SimState, block_id: int, name: str, allow_reserved: bool) -> None:
        args = [state.regs[r] for r in ARG_REGS[: call_arity(name)]]
        if name == "exit":
            state.terminal = "exit"
        elif name == "read":
            fd = concretize_value(state, self.ctx, args[0])
            if fd != STDIN_FD:
                return
            count = concretize_value(state, self.ctx, args[2])
            buf = concretize_address(state, self.ctx, args[1], max(1, count))
            for i in range(count):
                symbol = Sym(f"{STDIN}_{state.stdin_pos}")
                state.stdin_pos += 1
                self.ctx.restrict(symbol, 1)
                state.stream_reads.append((STDIN, symbol))
                self._store(state, block_id, buf + i, 1, symbol, allow_reserved)

    def transfer(self, state: SimState, src: int, dst: int) -> None:
        """Follow the edge ``src -> dst`` and collect the constraints it needs.

        Raises:
            MachineFault: The terminator cannot reach ``dst``
        """
        term = self.target.blocks[src].terminator
        env = state.env()
        ok = True
        if isinstance(term, Jmp):
            ok = term.target == dst
        elif isinstance(term, Br):
            condition = substitute(term.cond, env)
            if term.taken == term.fall:
                ok = dst == term.taken
            elif dst == term.taken:
                ok = state.add_constraint(as_condition(condition))
            elif dst == term.fall:
                ok = state.add_constraint(negate(condition))
            else:
                ok = False
        elif isinstance(term, (Call, ICall)):
            if isinstance(term, Call) and self.target.is_external(term.callee):
                ok = dst == term.ret
            else:
                callees = (term.callee,) if isinstance(term, Call) else term.callees
                entries = {self.target.functions[c].entry for c in callees}
                ok = dst in entries
                if ok and isinstance(term, ICall):
                    ok = state.add_constraint(cmp("==", state.regs[term.reg], Const(dst)))
                if ok:
                    state.stack = state.stack + (term.ret,)
        elif isinstance(term, Syscall):
            ok = dst == term.next
        elif isinstance(term, IJmp):
            ok = dst in term.targets and state.add_constraint(cmp("==", state.regs[term.reg], Const(dst)))
        elif isinstance(term, Ret):
            ok = bool(state.stack) and state.stack[-1] == dst
            if ok:
                state.stack = state.stack[:-1]
        if not ok:
            raise MachineFault(f"block {src:#x} cannot transfer to {dst:#x} on this path", block=src)

    def _semantics(self, state: SimState, key: int, before: dict[str, Expr]) -> None:
        stmt = self.program.statements[key]
        reg_map = self.binding.reg_map
        required: list[Expr] = []
        if stmt.kind == StmtKind.REGSET:
            g = reg_map[stmt.reg]  # type: ignore[index]
            if isinstance(stmt.value, AddrOf):
                wanted = self.binding.var_map[stmt.value.var]
            else:
                wanted = stmt.value  # type: ignore[assignment]
            required.append(cmp("==", state.regs[g], Const(wanted)))  # type: ignore[arg-type]
        elif stmt.kind == StmtKind.REGMOD:
            g = reg_map[stmt.reg]  # type: ignore[index]
            op = SPL_TO_EXPR_OP.get(stmt.op, stmt.op)  # type: ignore[arg-type]
            expected = binop(op, before[g], Const(stmt.value))  # type: ignore[arg-type]
            if state.regs[g] != expected:
                required.append(cmp("==", state.regs[g], expected))
        elif stmt.kind == StmtKind.CALL:
            for position, vreg in enumerate(stmt.args):
                hw = ARG_REGS[position]
                required.append(cmp("==", state.regs[hw], before[reg_map[vreg]]))
        for constraint in required:
            if not state.add_constraint(constraint):
                raise UnsatAfterConcretization(f"block {state.trace[-1]:#x} does not realize statement {key}")

    def _branch_witness(self, op: str, constant: int, label: str) -> int:
        probe = Sym("witness")
        condition = cmp(op, probe, Const(constant))
        if label == FALL:
            condition = negate(condition)
        decision = self.ctx.solver.decide([condition], self.ctx.timeout_ms)
        if not isinstance(decision, Sat):
            raise UnsatAfterConcretization(f"no witness for the {label} branch of {probe} {op} {constant}")
        return decision.model.get(probe, 0)

    def functional(self, state: SimState, key: int, block: int) -> list[SimState]:
        """Run the functional block of statement ``key``; conditionals return one clone per branch."""
        stmt = self.program.statements[key]
        match = self.binding.match_for(key, block)
        concretize_before_functional(state, self.ctx, match.deref)
        bundles = self._out_bundles(key)

        if stmt.kind == StmtKind.COND:
            hw = self.binding.reg_map[stmt.reg]  # type: ignore[index]
            clones: list[tuple[SimState, Bundle]] = []
            natural_taken = False
            for bundle in bundles:
                clone = state.copy()
                holds = cmp(stmt.op, clone.regs[hw], Const(stmt.value))  # type: ignore[arg-type]
                if bundle.label == FALL:
                    holds = negate(holds)
                model = None
                if not natural_taken and not (isinstance(holds, Const) and holds.value == 0):
                    trial = clone.constraints if isinstance(holds, Const) else clone.constraints + [holds]
                    model = _decide_sat(self.ctx, trial)
                if model is not None:
                    clone.add_constraint(holds)
                    value = evaluate(clone.regs[hw], {a: model.get(a, 0) for a in atoms(clone.regs[hw])})
                    forced = False
                    natural_taken = True
                else:
                    value = self._branch_witness(stmt.op, stmt.value, bundle.label)  # type: ignore[arg-type]
                    clone.regs[hw] = Const(value)
                    forced = True
                clone.witnesses.append(Witness(key, bundle.label, stmt.reg, hw, value, forced))  # type: ignore[arg-type]
                logger.debug(
                    "Cloned state at conditional",
                    extra={"context": {"stmt": key, "label": bundle.label, "value": hex(value), "forced": forced}},
                )
                clones.append((clone, bundle))
        else:
            clones = [(state, bundle) for bundle in bundles[:1]]

        allow_reserved = stmt.kind in (StmtKind.MEMWR, StmtKind.CALL)
        results = []
        for clone, bundle in clones:
            before = dict(clone.regs)
            self.execute_block(clone, block, FUNCTIONAL, key, allow_reserved)
            self._semantics(clone, key, before)
            clone.visited.add(key)
            clone.key, clone.block = key, block
            clone.pending = bundle
            results.append(clone)
        return results

    def _arm(self, block: int, key: int, label: str) -> int | None:
        term = self.target.blocks[block].terminator
        if not isinstance(term, Br) or label not in (TAKEN, FALL):
            return None
        match = self.binding.match_for(key, block)
        exact = match.branch != "negated"
        if (label == TAKEN) == exact:
            return term.taken
        return term.fall

    def candidate_paths(self, state: SimState, bundle: Bundle, dst: int) -> list[tuple[int, ...]]:
        """Block sequences to try for ``bundle``; each starts after the current block and ends at ``dst``."""
        avoid = self.dg.avoid.get(bundle, frozenset())
        if bundle.src == ENTRY:
            paths = k_shortest_dispatcher_paths(
                self.cfg, self.entry, dst, self.k, avoid, stack=(), limit=self.limit, allow_empty=True
            )
            return [(self.entry,) + p.blocks for p in paths]

        assert state.block is not None
        arm = self._arm(state.block, bundle.src, bundle.label)  # type: ignore[arg-type]
        if arm is None:
            paths = k_shortest_dispatcher_paths(
                self.cfg, state.block, dst, self.k, avoid, stack=state.stack, limit=self.limit
            )
            return [p.blocks for p in paths]
        if arm == dst:
            return [(dst,)]
        paths = k_shortest_dispatcher_paths(
            self.cfg, arm, dst, self.k, avoid, stack=state.stack, limit=max(1, self.limit - 1)
        )
        return [(arm,) + p.blocks for p in paths]

    def gadget(self, state: SimState, bundle: Bundle, blocks: tuple[int, ...]) -> list[SimState]:
        """Execute one dispatcher path and the functional block it reaches."""
        dst_key = bundle.dst
        prev = state.block
        entry_path = bundle.src == ENTRY
        for index, block in enumerate(blocks):
            if prev is not None:
                self.transfer(state, prev, block)
            if index == len(blocks) - 1:
                break
            self.execute_block(state, block, ENTRY_ROLE if entry_path and index == 0 else DISPATCHER)
            if state.terminal is not None:
                raise SimulationAbort(f"dispatcher block {block:#x} ends the program")
            prev = block

        dst = blocks[-1]
        if isinstance(dst_key, tuple):
            state.trace.append(dst)
            state.log.append(BlockRecord(dst, "returnto"))
            state.terminal = "returnto"
            return [state]
        if dst_key in state.visited:
            state.terminal = "loop"
            return [state]
        return self.functional(state, dst_key, dst)  # type: ignore[arg-type]

    def _advance(self, state: SimState, bundle: Bundle) -> list[SimState]:
        if bundle.dst == EXIT:
            state.terminal = "end"
            return [state]
        dst = self.selection[bundle.dst]
        candidates = self.candidate_paths(state, bundle, dst)
        if not candidates:
            raise PipelineFailure(
                FailureKind.NO_PATH,
                f"no dispatcher path from {bundle.src} to {bundle.dst} within L={self.limit}",
                bundle.dst if isinstance(bundle.dst, int) else None,
            )

        kind = FailureKind.NO_PATH
        reasons = []
        for rank, blocks in enumerate(candidates):
            self.stats.paths_tried += 1
            snap = self.ctx.snapshot()
            trial = state.copy()
            try:
                successors = self.gadget(trial, bundle, blocks)
                for successor in successors:
                    if _decide_sat(self.ctx, successor.constraints) is None:
                        raise UnsatAfterConcretization("constraints unsatisfiable after the gadget")
            except (MachineFault, SimulationAbort) as e:
                self.ctx.restore(snap)
                self.stats.paths_rejected += 1
                if isinstance(e, (CellAlreadySet, UnsatAfterConcretization)):
                    kind = FailureKind.UNSAT
                reasons.append(str(e))
                logger.info(
                    "Dispatcher path rejected",
                    extra={
                        "context": {
                            "src": str(bundle.src),
                            "dst": str(bundle.dst),
                            "rank": rank,
                            "length": len(blocks),
                            "reason": str(e),
                        }
                    },
                )
                continue
            self.stats.longest_dispatcher = max(self.stats.longest_dispatcher, len(blocks) - 1)
            logger.info(
                "Dispatcher path accepted",
                extra={
                    "context": {
                        "src": str(bundle.src),
                        "dst": str(bundle.dst),
                        "rank": rank,
                        "blocks": [hex(b) for b in blocks],
                    }
                },
            )
            return successors
        raise PipelineFailure(
            kind,
            f"{len(candidates)} dispatcher path(s) from {bundle.src} to {bundle.dst} rejected: {reasons[-1]}",
            bundle.dst if isinstance(bundle.dst, int) else None,
        )

    def run(self) -> Solution:
        start = SimState.initial(self.program, self.binding.var_map, ENTRY)
        start.pending = self._out_bundles(ENTRY)[0]
        pending = [start]
        terminals: list[SimState] = []
        while pending:
            state = pending.pop(0)
            self.stats.states += 1
            if state.terminal is not None:
                terminals.append(state)
                continue
            pending.extend(self._advance(state, state.pending))

        constraints: list[Expr] = []
        for state in terminals:
            for constraint in state.constraints:
                if constraint not in constraints:
                    constraints.append(constraint)
        decision = self.ctx.decide(constraints)
        self.stats.decisions = self.ctx.decisions
        if not isinstance(decision, Sat):
            raise PipelineFailure(
                FailureKind.UNSAT, f"terminal constraints are not jointly satisfiable ({decision})"
            )
        used = set()
        for constraint in constraints:
            used |= atoms(constraint)
        cells = sorted((a for a in used if isinstance(a, Cell)), key=lambda c: c.addr)
        witnesses = []
        for state in terminals:
            for witness in state.witnesses:
                if all((w.stmt, w.label) != (witness.stmt, witness.label) for w in witnesses):
                    witnesses.append(witness)
        plan = {k: b for k, b in self.selection.items() if isinstance(k, int)}
        return Solution(
            ir=self.ir,
            binding=self.binding,
            entry=self.entry,
            plan=plan,
            terminals=terminals,
            constraints=constraints,
            model=dict(decision.model),
            cells=cells,
            witnesses=sorted(witnesses, key=lambda w: (w.stmt, w.label)),
            stats=self.stats,
            subgraph_rank=self.hk.rank,
        )


def simulate(
    ir: StatementIR,
    dg: DeltaGraph,
    hk: InducedSubgraph,
    entry: int,
    target: TargetProgram,
    binding: ResourceBinding,
    cfg: nx.DiGraph,
    solver: ConstraintSolver,
    k: int = 8,
    limit: int = 128,
    timeout_ms: int = 5000,
    summaries: dict[int, BlockSummary] | None = None,
    stats: StitchStats | None = None,
) -> Solution:
    """Stitch an induced subgraph into concrete dispatcher paths.

    Args:
        ir: Payload in the ordering the delta graph was built for
        dg: Delta graph (bundles and per-bundle clobber sets)
        hk: Selected functional blocks
        entry: Entry block
        target: Target program
        binding: Resource binding of the delta graph
        cfg: CFG_A
        solver: Decision procedure
        k: Dispatcher candidates per bundle
        limit: Maximum dispatcher length
        timeout_ms: Solver timeout per conjunction
        summaries: Block summaries; their constant cells stay out of scratch memory
        stats: Counters to update, also on failure

    Returns:
        The solution

    Raises:
        PipelineFailure: NO_PATH when a bundle has no viable dispatcher, UNSAT
            when constraints cannot be satisfied
    """
    if k < 1:
        raise ValueError("K must be >= 1")
    if entry not in target.blocks:
        raise ValueError(f"unknown entry block {entry:#x}")
    with custom_span("stitcher.simulate", {"subgraph_rank": hk.rank, "k": k, "limit": limit}) as span:
        stitcher = Stitcher(
            ir, dg, hk, target, binding, cfg, solver, entry, k, limit, timeout_ms, summaries, stats
        )
        solution = stitcher.run()
        span.set_attribute("states", len(solution.terminals))
        logger.info(
            "Stitching succeeded",
            extra={"context": {"subgraph_rank": hk.rank, "terminals": len(solution.terminals), **solution.stats.as_dict()}},
        )
        return solution
