"""Statement IR: dependence groups, reordering and the payload adjacency graph."""

import itertools
import logging
from collections.abc import Iterator, Sequence
from dataclasses import dataclass

import networkx as nx

from spl_frontend.ast import SplProgram, StmtKind

logger = logging.getLogger(__name__)

# Edge keys of the adjacency graph
NEXT = "next"
JUMP = "jump"
TAKEN = "taken"
FALL = "fall"


@dataclass(frozen=True)
class StatementIR:
    """Dependence-ordered statements and the payload's control flow.

    Attributes:
        program: The program in source order
        groups: Independent-statement groups (statement indices) in dependence order
        adjacency: Multi-digraph over statement positions; node ``len(statements)`` is
            the exit. Edge keys are ``next``, ``jump``, ``taken`` and ``fall``.
    """

    program: SplProgram
    groups: tuple[tuple[int, ...], ...]
    adjacency: nx.MultiDiGraph

    @property
    def exit_node(self) -> int:
        return len(self.program.statements)


def _segments(program: SplProgram) -> list[list[int]]:
    """Split statements into runs that may be reordered internally.

    Label targets start a new run; control statements stand alone; declarations
    form runs of their own.
    """
    targets = set(program.labels.values())
    segments: list[list[int]] = []
    current: list[int] = []
    current_is_decl = False
    for index, stmt in enumerate(program.statements):
        is_decl = stmt.kind == StmtKind.VARSET
        if current and (index in targets or stmt.is_control() or is_decl != current_is_decl):
            segments.append(current)
            current = []
        current.append(index)
        current_is_decl = is_decl
        if stmt.is_control():
            segments.append(current)
            current = []
    if current:
        segments.append(current)
    return segments


def _depends(program: SplProgram, earlier: int, later: int) -> bool:
    a = program.statements[earlier]
    b = program.statements[later]
    wa, ra = a.writes(), a.reads()
    wb, rb = b.writes(), b.reads()
    return bool(wa & rb or ra & wb or wa & wb)


def _kahn_layers(program: SplProgram, segment: list[int]) -> list[tuple[int, ...]]:
    graph = nx.DiGraph()
    graph.add_nodes_from(segment)
    for i, earlier in enumerate(segment):
        for later in segment[i + 1 :]:
            if _depends(program, earlier, later):
                graph.add_edge(earlier, later)
    return [tuple(sorted(layer)) for layer in nx.topological_generations(graph)]


def build_adjacency(program: SplProgram) -> nx.MultiDiGraph:
    """Build M_Adj over statement positions (plus the exit node)."""
    n = len(program.statements)
    adjacency = nx.MultiDiGraph()
    adjacency.add_nodes_from(range(n + 1))
    for index, stmt in enumerate(program.statements):
        if stmt.kind == StmtKind.JUMP:
            adjacency.add_edge(index, program.labels[stmt.label], key=JUMP)  # type: ignore[index]
        elif stmt.kind == StmtKind.COND:
            adjacency.add_edge(index, program.labels[stmt.label], key=TAKEN)  # type: ignore[index]
            adjacency.add_edge(index, index + 1, key=FALL)
        elif stmt.kind == StmtKind.RETURNTO:
            adjacency.add_edge(index, n, key=NEXT)
        else:
            adjacency.add_edge(index, index + 1, key=NEXT)
    return adjacency


def build_statement_ir(program: SplProgram) -> StatementIR:
    """Group statements by dependence (Kahn layering per reorderable run)."""
    groups: list[tuple[int, ...]] = []
    for segment in _segments(program):
        if program.statements[segment[0]].kind == StmtKind.VARSET:
            groups.append(tuple(segment))
        else:
            groups.extend(_kahn_layers(program, segment))
    logger.debug(
        "Built statement IR",
        extra={"context": {"groups": [list(g) for g in groups]}},
    )
    return StatementIR(program, tuple(groups), build_adjacency(program))


def enumerate_permutations(ir: StatementIR, limit: int) -> Iterator[tuple[int, ...]]:
    """Yield up to ``limit`` distinct statement orderings, source order first.

    Each ordering concatenates one permutation per group.
    """
    if limit < 1:
        raise ValueError("permutation bound must be >= 1")
    yield from itertools.islice(_orderings(ir.groups), limit)


def _orderings(groups: Sequence[tuple[int, ...]]) -> Iterator[tuple[int, ...]]:
    # lazy over every group, first group varies slowest
    if not groups:
        yield ()
        return
    for head in itertools.permutations(groups[0]):
        for tail in _orderings(groups[1:]):
            yield head + tail


def reorder(program: SplProgram, order: Sequence[int]) -> SplProgram:
    """Rearrange statements; labels keep their positions."""
    statements = tuple(program.statements[i] for i in order)
    return SplProgram(statements, dict(program.labels), dict(program.variables))
