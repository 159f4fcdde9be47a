"""Compile pipeline: candidates, mappings, delta graphs, stitching and verification.

The search nests statement orderings (bound P), resource bindings, induced
subgraph ranks (bound N) and dispatcher candidates per bundle (bound K).
The first stitching that emits a valid write-set wins; when every attempt
fails the deepest failure reached is reported.
"""

import logging
import os
import pickle
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import networkx as nx

from block_matcher import CandidateSet, collect_candidates
from config import RunConfig
from delta_graph import DeltaGraph, InducedSubgraph, build_delta_graph, induced_subgraphs
from emitter_verifier import Plan, Report, WriteSet, emit_writes, plan_from_solution, verify
from errors import FailureKind, NoCandidate, PipelineFailure, WriteSetError
from resource_mapper import ResourceBinding, enumerate_bindings
from solvers import ConstraintSolver, get_solver
from spl_frontend.ast import SplProgram
from spl_frontend.ir import StatementIR, build_statement_ir, enumerate_permutations, reorder
from stitcher import Solution, StitchStats, simulate
from target_model.cfg import build_cfg
from target_model.model import TargetProgram
from target_model.summary import BlockSummary, summarize_program
from tracing_config import custom_span

logger = logging.getLogger(__name__)

CACHE_SUFFIX = ".summaries.pickle"


@dataclass
class CompileStats:
    """Search counters of one compile run."""

    candidates: int = 0
    permutations: int = 0
    mappings: int = 0
    delta_graphs: int = 0
    subgraphs: int = 0
    dispatcher_candidates: int = 0
    dispatcher_rejected: int = 0
    longest_dispatcher: int = 0

    def absorb(self, other: "CompileStats") -> None:
        for name in (
            "permutations",
            "mappings",
            "delta_graphs",
            "subgraphs",
            "dispatcher_candidates",
            "dispatcher_rejected",
        ):
            setattr(self, name, getattr(self, name) + getattr(other, name))
        self.candidates = max(self.candidates, other.candidates)
        self.longest_dispatcher = max(self.longest_dispatcher, other.longest_dispatcher)

    def absorb_stitch(self, stats: StitchStats) -> None:
        self.dispatcher_candidates += stats.paths_tried
        self.dispatcher_rejected += stats.paths_rejected
        self.longest_dispatcher = max(self.longest_dispatcher, stats.longest_dispatcher)

    def as_dict(self) -> dict:
        return {
            "candidates": self.candidates,
            "permutations": self.permutations,
            "mappings": self.mappings,
            "delta_graphs": self.delta_graphs,
            "subgraphs": self.subgraphs,
            "dispatcher_candidates": self.dispatcher_candidates,
            "dispatcher_rejected": self.dispatcher_rejected,
            "longest_dispatcher": self.longest_dispatcher,
        }


class FailureLog:
    """Keeps the deepest failure seen; the first one wins ties."""

    def __init__(self) -> None:
        self.dominant: PipelineFailure | None = None
        self.counts: dict[str, int] = {}

    def record(self, failure: PipelineFailure) -> None:
        self.counts[failure.kind.name] = self.counts.get(failure.kind.name, 0) + 1
        self._keep(failure)

    def merge(self, other: "FailureLog") -> None:
        for name, count in other.counts.items():
            self.counts[name] = self.counts.get(name, 0) + count
        if other.dominant is not None:
            self._keep(other.dominant)

    def _keep(self, failure: PipelineFailure) -> None:
        if self.dominant is None or failure.kind.depth > self.dominant.kind.depth:
            self.dominant = failure

    def raise_dominant(self) -> None:
        if self.dominant is None:
            raise PipelineFailure(FailureKind.NO_MAPPING, "no resource binding was produced")
        raise self.dominant


@dataclass
class CompileResult:
    """Artifacts of a successful compile.

    Attributes:
        solution: The stitched solution
        writes: Write-set realizing it
        plan: Statement -> block plan for ``verify``
        report: Replay verification of ``writes``
        order: Statement ordering the solution was found for
        candidates: C_B of that ordering
        dg: Delta graph the solution came from
        subgraph: Induced subgraph that was stitched
        stats: Search counters, summed over the attempts up to the winning one
    """

    solution: Solution
    writes: WriteSet
    plan: Plan
    report: Report
    order: tuple[int, ...]
    candidates: CandidateSet
    dg: DeltaGraph
    subgraph: InducedSubgraph
    stats: CompileStats = field(default_factory=CompileStats)

    @property
    def binding(self) -> ResourceBinding:
        return self.solution.binding


def cache_path(cache_dir: Path, target: TargetProgram) -> Path:
    return cache_dir / f"{target.digest}{CACHE_SUFFIX}"


def load_summaries(target: TargetProgram, cache_dir: Path | None = None) -> dict[int, BlockSummary]:
    """Block summaries of ``target``, through the cache when one is given.

    Unreadable or stale cache files are ignored and rewritten.
    """
    if cache_dir is None or not target.digest:
        return summarize_program(target)
    path = cache_path(cache_dir, target)
    try:
        with path.open("rb") as f:
            cached = pickle.load(f)
        if isinstance(cached, dict) and set(cached) == set(target.blocks):
            logger.debug("Summary cache hit", extra={"context": {"path": str(path)}})
            return cached
        logger.warning("Ignoring stale summary cache", extra={"context": {"path": str(path)}})
    except FileNotFoundError:
        pass
    except (OSError, pickle.UnpicklingError, EOFError, AttributeError, ImportError, IndexError, TypeError, ValueError) as e:
        logger.warning(
            "Ignoring unreadable summary cache",
            extra={"context": {"path": str(path), "error": str(e)}},
        )

    summaries = summarize_program(target)
    try:
        cache_dir.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(f".{os.getpid()}.tmp")
        with tmp.open("wb") as f:
            pickle.dump(summaries, f)
        os.replace(tmp, path)
    except OSError as e:
        logger.warning(
            "Could not write summary cache",
            extra={"context": {"path": str(path), "error": str(e)}},
        )
    return summaries


def resolve_entry(target: TargetProgram, entry: int | None) -> int:
    """The requested entry, else the target's declared one.

    Raises:
        ValueError: If neither exists or the block is unknown
    """
    chosen = entry if entry is not None else target.entry
    if chosen is None:
        raise ValueError("no entry block: pass --entry or declare one in the target")
    if chosen not in target.blocks:
        raise ValueError(f"entry {chosen:#x} is not a block of the target")
    return chosen


class Compiler:
    """Searches for a write-set that runs a payload on a target.

    Args:
        program: Payload in source order
        target: Target program
        config: Bounds and solver settings
        summaries: Block summaries; computed (or read from the cache) when None
    """

    def __init__(
        self,
        program: SplProgram,
        target: TargetProgram,
        config: RunConfig,
        summaries: dict[int, BlockSummary] | None = None,
    ):
        self.program = program
        self.target = target
        self.config = config
        self.entry = resolve_entry(target, config.entry)
        self.summaries = summaries if summaries is not None else load_summaries(target, config.cache_dir)
        self.cfg: nx.DiGraph = build_cfg(target)
        self.ir = build_statement_ir(program)

    def run(self) -> CompileResult:
        """Run the search.

        Raises:
            PipelineFailure: The dominant failure when every attempt fails
        """
        config = self.config
        with custom_span(
            "pipeline.compile",
            {"statements": len(self.program.statements), "jobs": config.jobs, **config.bounds()},
        ) as span:
            orders = list(enumerate_permutations(self.ir, config.P))
            failures = FailureLog()
            stats = CompileStats()
            if config.jobs > 1 and len(orders) > 1:
                with ThreadPoolExecutor(max_workers=config.jobs) as pool:
                    futures = [pool.submit(self._attempt, rank, order) for rank, order in enumerate(orders)]
                    result = self._collect((f.result() for f in futures), failures, stats)
                    pool.shutdown(cancel_futures=True)
            else:
                result = self._collect(
                    (self._attempt(rank, order) for rank, order in enumerate(orders)), failures, stats
                )

            span.set_attribute("permutations", stats.permutations)
            if result is None:
                assert failures.dominant is not None or not orders
                logger.info(
                    "Compilation failed",
                    extra={
                        "context": {
                            "dominant": failures.dominant.kind.name if failures.dominant else None,
                            "failures": failures.counts,
                            **stats.as_dict(),
                        }
                    },
                )
                failures.raise_dominant()
            assert result is not None
            result.stats = stats
            span.set_attribute("subgraph_rank", result.solution.subgraph_rank)
            logger.info(
                "Compilation succeeded",
                extra={
                    "context": {
                        "order": list(result.order),
                        "binding": list(result.binding.provenance),
                        "subgraph_rank": result.solution.subgraph_rank,
                        "verified": result.report.passed,
                        **stats.as_dict(),
                    }
                },
            )
            return result

    @staticmethod
    def _collect(attempts, failures: FailureLog, stats: CompileStats) -> CompileResult | None:
        # attempts arrive in permutation rank order
        for result, attempt_failures, attempt_stats, fatal in attempts:
            stats.absorb(attempt_stats)
            failures.merge(attempt_failures)
            if result is not None:
                return result
            if fatal:
                break
        return None

    def _attempt(
        self, rank: int, order: tuple[int, ...]
    ) -> tuple[CompileResult | None, FailureLog, CompileStats, bool]:
        """Search one statement ordering.

        Returns:
            (result or None, failures, counters, whether later orderings are
            bound to fail the same way)
        """
        failures = FailureLog()
        stats = CompileStats(permutations=1)
        program = reorder(self.program, order)
        ir = build_statement_ir(program)
        config = self.config
        solver = get_solver(config.solver)

        try:
            candidates = collect_candidates(self.target, self.summaries, program)
        except NoCandidate as e:
            failures.record(e)
            return None, failures, stats, True
        stats.candidates = sum(len(candidates.blocks(s)) for s in candidates.matches)

        try:
            bindings = enumerate_bindings(candidates, self.target, self.summaries)
            for binding in bindings:
                stats.mappings += 1
                try:
                    dg = build_delta_graph(ir, binding, self.cfg, self.summaries, self.entry, config.L)
                except PipelineFailure as e:
                    failures.record(e)
                    continue
                stats.delta_graphs += 1
                ranked = induced_subgraphs(dg, config.N)
                if not ranked:
                    failures.record(
                        PipelineFailure(FailureKind.NO_PATH, "no induced subgraph has an edge for every bundle")
                    )
                for hk in ranked:
                    stats.subgraphs += 1
                    found = self._stitch(
                        rank, order, ir, candidates, binding, dg, hk, solver, failures, stats
                    )
                    if found is not None:
                        return found, failures, stats, False
        except PipelineFailure as e:
            failures.record(e)
            return None, failures, stats, e.kind == FailureKind.NO_MAPPING
        if stats.mappings == 0:
            failures.record(
                PipelineFailure(FailureKind.NO_MAPPING, "every register mapping leaves a statement without functional blocks")
            )
        return None, failures, stats, False

    def _stitch(
        self,
        rank: int,
        order: tuple[int, ...],
        ir: StatementIR,
        candidates: CandidateSet,
        binding: ResourceBinding,
        dg: DeltaGraph,
        hk: InducedSubgraph,
        solver: ConstraintSolver,
        failures: FailureLog,
        stats: CompileStats,
    ) -> CompileResult | None:
        config = self.config
        stitch_stats = StitchStats()
        try:
            solution = simulate(
                ir,
                dg,
                hk,
                self.entry,
                self.target,
                binding,
                self.cfg,
                solver,
                k=config.K,
                limit=config.L,
                timeout_ms=config.timeout_ms,
                summaries=self.summaries,
                stats=stitch_stats,
            )
        except PipelineFailure as e:
            failures.record(e)
            return None
        finally:
            stats.absorb_stitch(stitch_stats)

        try:
            writes = emit_writes(solution, self.target)
        except WriteSetError as e:
            failures.record(PipelineFailure(FailureKind.UNSAT, f"write-set rejected: {e}"))
            return None
        plan = plan_from_solution(solution, order)
        report = verify(self.target, writes, self.entry, self.program, plan, config.fuel, self.cfg)
        if not report.passed:
            logger.error(
                "Emitted write-set failed replay verification",
                extra={"context": {"permutation": rank, "subgraph_rank": hk.rank}},
            )
        return CompileResult(solution, writes, plan, report, order, candidates, dg, hk)


def compile_payload(
    program: SplProgram,
    target: TargetProgram,
    config: RunConfig,
    summaries: dict[int, BlockSummary] | None = None,
) -> CompileResult:
    """Compile ``program`` onto ``target``; see ``Compiler``.

    Raises:
        PipelineFailure: The dominant failure when no attempt succeeds
        ValueError: On an unknown entry block
    """
    return Compiler(program, target, config, summaries).run()
