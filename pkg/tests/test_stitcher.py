"""Tests for guided simulation and address concretization."""

import pytest

from block_matcher import collect_candidates
from delta_graph import build_delta_graph, minimum_induced_subgraph
from errors import CellAlreadySet, FailureKind, PipelineFailure
from expr import Cell, Const, binop, cmp
from resource_mapper import enumerate_bindings
from solvers import BuiltinSolver
from spl_frontend import build_statement_ir, load_payload
from stitcher import (
    MemStore,
    SimContext,
    SimState,
    StitchStats,
    concretize_address,
    concretize_before_functional,
    concretize_on_overwrite,
    simulate,
)
from target_model import build_cfg, summarize_program


def stitch(target, payload: str, entry: int, reg_map: dict | None = None, k: int = 8):
    program = load_payload(payload)
    summaries = summarize_program(target)
    ir = build_statement_ir(program)
    candidates = collect_candidates(target, summaries, program)
    binding = next(
        b for b in enumerate_bindings(candidates, target, summaries) if reg_map is None or b.reg_map == reg_map
    )
    cfg = build_cfg(target, summaries)
    dg = build_delta_graph(ir, binding, cfg, summaries, entry)
    hk = minimum_induced_subgraph(dg)
    stats = StitchStats()
    solution = simulate(ir, dg, hk, entry, target, binding, cfg, BuiltinSolver(), k=k, summaries=summaries, stats=stats)
    return solution, stats


@pytest.fixture
def execve_context(t1):
    program = load_payload("execve")
    summaries = summarize_program(t1)
    candidates = collect_candidates(t1, summaries, program)
    binding = next(enumerate_bindings(candidates, t1, summaries))
    ctx = SimContext(t1, binding, BuiltinSolver())
    state = SimState.initial(program, binding.var_map, None)
    return ctx, state


class TestSimState:
    """Test cases for the symbolic state."""

    def test_variables_are_initial_stores(self, execve_context):
        """Payload variables are stored before the first block."""
        _, state = execve_context
        assert all(store.init for store in state.stores)
        assert {store.addr for store in state.stores} == {0x601008, 0x601010, 0x601018}
        argv = next(s for s in state.stores if s.addr == 0x601010)
        assert argv.value == Const(0x601008)

    def test_entry_memory_is_cells(self, execve_context):
        """Untouched writable memory reads as entry cells; read-only memory as constants."""
        ctx, state = execve_context
        assert state.read(ctx, 0x601100, 8) == Cell(0x601100, 8)
        assert state.read(ctx, 0x601100, 8) is ctx.cells[0x601100]
        assert state.read(ctx, 0x600000, 8) == Const(0x6E69622F7273752F)

    def test_copy_is_independent(self, execve_context):
        """Clones do not share registers or constraints."""
        ctx, state = execve_context
        clone = state.copy()
        clone.regs["g0"] = Const(5)
        clone.add_constraint(cmp("==", Cell(0x601100, 8), Const(1)))
        assert state.regs["g0"] == Const(0)
        assert state.constraints == []

    def test_false_constraint(self, execve_context):
        """A constraint folding to false is reported."""
        _, state = execve_context
        assert state.add_constraint(Const(0)) is False
        assert state.add_constraint(Const(1)) is True


class TestConcretization:
    """Test cases for the concretization rules."""

    def test_constant_address(self, execve_context):
        """Constant addresses pass through."""
        ctx, state = execve_context
        assert concretize_address(state, ctx, Const(0x601100), 8) == 0x601100
        assert state.pins == []

    def test_forced_atom_is_kept(self, execve_context):
        """An atom the constraints fix keeps its value."""
        ctx, state = execve_context
        cell = state.read(ctx, 0x601100, 8)
        state.add_constraint(cmp("==", cell, Const(0x601200)))
        addr = binop("+", cell, Const(0x10))
        assert concretize_address(state, ctx, addr, 8) == 0x601210
        assert ctx.scratch == []

    def test_free_atom_points_at_scratch(self, execve_context):
        """An unconstrained atom is pointed at a fresh scratch chunk past the variables."""
        ctx, state = execve_context
        cell = state.read(ctx, 0x601100, 8)
        assert concretize_address(state, ctx, binop("+", cell, Const(0x10)), 8) == 0x601030
        assert ctx.scratch == [(0x601020, 64)]
        assert state.pins == [(cell, 0x601020)]

    def test_overwrite_pins_constrained_cell(self, execve_context):
        """A constrained cell takes its model value before a store hides it."""
        ctx, state = execve_context
        cell = state.read(ctx, 0x601100, 8)
        state.add_constraint(cmp("==", cell, Const(7)))
        concretize_on_overwrite(state, ctx, 0x601100, 8, Const(0))
        assert state.pins == [(cell, 7)]

    def test_overwrite_gives_held_cell_a_pointer(self, execve_context):
        """An unconstrained cell still held by a register becomes a scratch pointer."""
        ctx, state = execve_context
        cell = state.read(ctx, 0x601100, 8)
        state.regs["g4"] = cell
        concretize_on_overwrite(state, ctx, 0x601100, 8, Const(0))
        assert state.pins == [(cell, 0x601020)]

    def test_overwrite_keeps_surviving_cell(self, execve_context):
        """Cells that survive in the stored value are left alone."""
        ctx, state = execve_context
        cell = state.read(ctx, 0x601100, 8)
        state.add_constraint(cmp("==", cell, Const(7)))
        concretize_on_overwrite(state, ctx, 0x601100, 8, binop("+", cell, Const(1)))
        assert state.pins == []

    def test_cell_already_set(self, execve_context):
        """A dereferenced cell written after the entry point aborts the path."""
        ctx, state = execve_context
        state.stores.append(MemStore(3, 0x400100, 0x601100, 8, Const(1)))
        with pytest.raises(CellAlreadySet):
            concretize_before_functional(state, ctx, ((Const(0x601100), 8),))

    def test_empty_deref_set(self, execve_context):
        """A block without dereferenced cells leaves the state untouched."""
        ctx, state = execve_context
        assert concretize_before_functional(state, ctx, ()) is state
        assert state.constraints == [] and ctx.cells == {}


class TestSimulate:
    """Test cases for simulate."""

    def test_execve_on_t1(self, t1):
        """The session record is redirected to a scratch chunk holding the variable addresses."""
        solution, stats = stitch(t1, "execve", 0x400100)
        assert solution.plan == {2: 0x400110, 3: 0x400120, 4: 0x400130, 5: 0x400140}
        assert [s.terminal for s in solution.terminals] == ["end"]
        assert solution.value_of(Cell(0x601000, 8)) == 0x601020
        assert solution.value_of(Cell(0x601030, 8)) == 0x601008
        assert solution.value_of(Cell(0x601038, 8)) == 0x601010
        assert [c.addr for c in solution.cells] == [0x601000, 0x601030, 0x601038]
        assert stats.paths_rejected == 0

    def test_conditional_clones(self, t2):
        """Each payload branch ends in its own state; the unreachable side is forced."""
        solution, stats = stitch(t2, "ifelse", 0x403C00, {0: "g3", 1: "g4", 2: "g5"})
        assert sorted(s.terminal for s in solution.terminals) == ["returnto", "returnto"]
        fall, taken = solution.witnesses
        assert (fall.label, fall.value, fall.forced) == ("fall", 0, False)
        assert (taken.label, taken.value, taken.forced) == ("taken", 1, True)
        # the short taken route dereferences the forced register and faults
        assert stats.paths_rejected >= 1
        assert solution.value_of(Cell(0x602100, 8)) != 0

    def test_single_candidate_fails(self, t2):
        """With K=1 the faulting taken route is the only candidate."""
        with pytest.raises(PipelineFailure) as exc_info:
            stitch(t2, "ifelse", 0x403C00, {0: "g3", 1: "g4", 2: "g5"}, k=1)
        assert exc_info.value.kind == FailureKind.NO_PATH

    def test_trace_json(self, t1):
        """Trace dumps carry the plan, per-block records and the model in hex."""
        solution, _ = stitch(t1, "execve", 0x400100)
        trace = solution.trace_json()
        assert trace["plan"]["5"] == "0x400140"
        roles = [record["role"] for record in trace["states"][0]["blocks"]]
        assert roles[0] == "entry"
        assert roles.count("functional") == 4

    def test_bad_arguments(self, t1):
        """K below one and unknown entries raise ValueError."""
        program = load_payload("execve")
        summaries = summarize_program(t1)
        ir = build_statement_ir(program)
        binding = next(enumerate_bindings(collect_candidates(t1, summaries, program), t1, summaries))
        cfg = build_cfg(t1, summaries)
        dg = build_delta_graph(ir, binding, cfg, summaries, 0x400100)
        hk = minimum_induced_subgraph(dg)
        with pytest.raises(ValueError):
            simulate(ir, dg, hk, 0x400100, t1, binding, cfg, BuiltinSolver(), k=0)
        with pytest.raises(ValueError):
            simulate(ir, dg, hk, 0x123, t1, binding, cfg, BuiltinSolver())
