"""Independent replay verification of a write-set.

The write-set is applied to a fresh target image and the target is run
concretely from the entry block. The run must stay on CFG_A edges with
matching returns, execute the functional block of every payload step in
order with the mapped registers holding the values the SPL reference
interpreter computes, and leave payload variables to the blocks of memory
writing statements. Conditionals with forced witnesses get one more replay
each, with the witness set in both the target and the interpreter.
"""

import logging
from collections import Counter
from dataclasses import dataclass, field, replace

import networkx as nx

from emitter_verifier.emitter import Plan, WriteSet
from errors import SplRuntimeError
from paths import check_return_discipline
from resource_mapper import overlaps
from spl_frontend.ast import SplProgram, StmtKind
from spl_frontend.interpreter import interpret_spl
from spl_frontend.ir import reorder
from target_model.cfg import build_cfg
from target_model.machine import MachineState, Trace, execute_concrete
from target_model.model import TargetProgram
from tracing_config import custom_span

logger = logging.getLogger(__name__)

PASS = "PASS"
FAIL = "FAIL"


@dataclass(frozen=True)
class Divergence:
    """First point where the replay stops agreeing with the payload."""

    reason: str
    block: int | None = None
    stmt: int | None = None

    def as_dict(self) -> dict:
        return {
            "reason": self.reason,
            "block": hex(self.block) if self.block is not None else None,
            "stmt": self.stmt,
        }


@dataclass
class RunReport:
    name: str
    exit: str = ""
    blocks_executed: int = 0
    statements_checked: int = 0
    visits: Counter = field(default_factory=Counter)
    truncated: bool = False
    events: list[dict] = field(default_factory=list)
    stdout: bytes = b""
    divergence: Divergence | None = None

    @property
    def passed(self) -> bool:
        return self.divergence is None

    @property
    def loop_bound(self) -> str:
        """Most visits of one statement; ``N+`` when fuel ran out first."""
        most = max(self.visits.values(), default=0)
        return f"{most}+" if self.truncated else str(most)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "status": PASS if self.passed else FAIL,
            "exit": self.exit,
            "blocks_executed": self.blocks_executed,
            "statements_checked": self.statements_checked,
            "visits": {str(k): v for k, v in sorted(self.visits.items())},
            "loop_bound": self.loop_bound,
            "events": self.events,
            "stdout": self.stdout.hex(),
            "divergence": self.divergence.as_dict() if self.divergence else None,
        }


@dataclass
class Report:
    runs: list[RunReport] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.runs) and all(run.passed for run in self.runs)

    @property
    def natural(self) -> RunReport:
        return self.runs[0]

    def as_dict(self) -> dict:
        return {"status": PASS if self.passed else FAIL, "runs": [run.as_dict() for run in self.runs]}


def _reg(regs: tuple[int, ...], name: str) -> int:
    return regs[int(name[1:])]


def _vregs(resources: set[str]) -> list[int]:
    return sorted(int(r[1:]) for r in resources if r.startswith("r"))


class _Replay:
    def __init__(
        self,
        target: TargetProgram,
        cfg: nx.DiGraph,
        program: SplProgram,
        plan: Plan,
        ws: WriteSet,
        fuel: int,
    ):
        self.target = target
        self.cfg = cfg
        self.program = program
        self.plan = plan
        self.ws = ws
        self.fuel = fuel
        self.reserved = sorted(
            (addr, program.variables[name].extent) for name, addr in plan.variables.items()
        )
        self.writers = {
            plan.blocks[s]
            for s, stmt in enumerate(program.statements)
            if stmt.kind in (StmtKind.MEMWR, StmtKind.CALL) and s in plan.blocks
        }

    def run(
        self,
        name: str,
        target_overrides: dict[int, dict[str, int]] | None = None,
        spl_overrides: dict[int, dict[int, int]] | None = None,
    ) -> RunReport:
        report = RunReport(name)
        stdin = self.ws.stream("stdin")
        state = MachineState.initial(self.target, self.ws.triples(), stdin)
        trace = execute_concrete(
            self.target, self.plan.entry, state, self.fuel, record_registers=True, overrides=target_overrides
        )
        report.exit = trace.exit
        report.blocks_executed = len(trace.blocks)
        report.stdout = trace.stdout
        report.events = [
            {"kind": e.kind, "block": hex(e.block), "name": e.name, "args": [hex(a) for a in e.args]}
            for e in trace.events
        ]
        report.divergence = self._compare(trace, stdin, spl_overrides, report)
        logger.info(
            "Replay finished",
            extra={
                "context": {
                    "run": name,
                    "passed": report.passed,
                    "blocks": report.blocks_executed,
                    "loop_bound": report.loop_bound,
                }
            },
        )
        return report

    def _compare(
        self,
        trace: Trace,
        stdin: bytes,
        spl_overrides: dict[int, dict[int, int]] | None,
        report: RunReport,
    ) -> Divergence | None:
        bad = check_return_discipline(self.cfg, trace.blocks)
        if bad is not None:
            src, dst = trace.blocks[bad], trace.blocks[bad + 1]
            return Divergence(f"transition {src:#x} -> {dst:#x} violates CFI or the shadow stack", src)

        try:
            oracle = interpret_spl(
                self.program, stdin, fuel=self.fuel, layout=self.plan.variables, overrides=spl_overrides, record=True
            )
        except SplRuntimeError as e:
            return Divergence(f"reference interpreter failed: {e}")

        final = tuple(trace.state.regs) if trace.state is not None else ()
        cursor = 0
        last = -1
        for step in oracle.steps:
            stmt = self.program.statements[step.index]
            if stmt.blockless:
                continue
            block = self.plan.blocks.get(step.index)
            if block is None:
                return Divergence(f"statement {step.index} has no functional block in the plan", stmt=step.index)
            try:
                at = trace.blocks.index(block, cursor)
            except ValueError:
                if trace.exit == "fuel":
                    report.truncated = True
                    return None
                fault = trace.fault
                where = f"; fault at {fault.block:#x}: {fault.name}" if fault else ""
                return Divergence(
                    f"functional block {block:#x} of statement {step.index} not reached{where}",
                    fault.block if fault else None,
                    step.index,
                )

            before = trace.registers[at]
            after = trace.registers[at + 1] if at + 1 < len(trace.registers) else final
            for vreg in _vregs(stmt.reads()):
                hw = self.plan.registers[vreg]
                if _reg(before, hw) != step.before[vreg]:
                    return Divergence(
                        f"{hw} holds {_reg(before, hw):#x} before the block, statement {step.index} "
                        f"expects r{vreg} = {step.before[vreg]:#x}",
                        block,
                        step.index,
                    )
            for vreg in _vregs(stmt.writes()):
                hw = self.plan.registers[vreg]
                if _reg(after, hw) != step.after[vreg]:
                    return Divergence(
                        f"{hw} holds {_reg(after, hw):#x} after the block, statement {step.index} "
                        f"expects r{vreg} = {step.after[vreg]:#x}",
                        block,
                        step.index,
                    )
            if stmt.kind == StmtKind.CALL and not any(
                e.step == at and e.name == stmt.name for e in trace.events
            ):
                return Divergence(f"block {block:#x} does not call {stmt.name}", block, step.index)

            report.visits[step.index] += 1
            report.statements_checked += 1
            cursor = at + 1
            last = at

        if oracle.exit.kind == "returnto" and oracle.exit.addr not in trace.blocks[cursor:]:
            return Divergence(f"returnto block {oracle.exit.addr:#x} not reached after the payload")

        for store in trace.stores:
            if store.step > last:
                break
            if overlaps(store.addr, store.size, self.reserved) and store.block not in self.writers:
                return Divergence(
                    f"block {store.block:#x} clobbers payload variable memory at {store.addr:#x}", store.block
                )
        return None


def verify(
    target: TargetProgram,
    ws: WriteSet,
    entry: int,
    payload: SplProgram,
    plan: Plan,
    fuel: int = 10_000,
    cfg: nx.DiGraph | None = None,
) -> Report:
    """Replay a write-set and check it against the payload.

    Args:
        target: Target program
        ws: Write-set to apply before the entry point
        entry: Entry block (overrides the plan's)
        payload: Payload in source order; the plan's order is applied here
        plan: Statement -> block map, binding and branch witnesses
        fuel: Maximum executed blocks per replay
        cfg: CFG_A, built from the target when None

    Returns:
        A report with the natural replay first, then one forced replay per
        forced witness
    """
    with custom_span("verifier.verify", {"fuel": fuel}) as span:
        plan = replace(plan, entry=entry)
        if plan.order:
            payload = reorder(payload, plan.order)
        replay = _Replay(target, cfg if cfg is not None else build_cfg(target), payload, plan, ws, fuel)
        report = Report([replay.run("natural")])
        for witness in plan.witnesses:
            if not witness.forced:
                continue
            block = plan.blocks[witness.stmt]
            report.runs.append(
                replay.run(
                    f"forced:{witness.stmt}:{witness.label}",
                    {block: {witness.reg: witness.value}},
                    {witness.stmt: {witness.vreg: witness.value}},
                )
            )
        span.set_attribute("passed", report.passed)
        if not report.passed:
            failed = next(run for run in report.runs if not run.passed)
            logger.warning(
                "Verification failed",
                extra={"context": {"run": failed.name, **failed.divergence.as_dict()}},  # type: ignore[union-attr]
            )
        return report
