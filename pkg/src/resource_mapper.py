"""Register and variable binding through maximum bipartite matchings.

R_G is matched first; every maximum matching that covers the payload's
virtual registers selects V_G graphs, whose own maximum matchings fix the
variable addresses. Candidate blocks compatible with the binding are the
functional blocks F_B.
"""

import logging
import re
from collections.abc import Iterator
from dataclasses import dataclass, field

import networkx as nx

from block_matcher import ANY_ADDRESS, CandidateSet, MatchResult, vreg_node
from errors import FailureKind, PipelineFailure, Unsatisfiable
from expr import Const
from spl_frontend.ast import AddrOf, SplProgram, StmtKind
from target_model.model import TargetProgram
from target_model.summary import BlockSummary
from tracing_config import custom_span

logger = logging.getLogger(__name__)

_NUMBERED = re.compile(r"^(\D*)(\d+)$")


def _node_key(node) -> tuple:
    """Order ``__r2`` before ``__r10`` and ``g2`` before ``g10``; ints after strings."""
    if isinstance(node, int):
        return (1, "", node)
    match = _NUMBERED.match(node)
    if match:
        return (0, match.group(1), int(match.group(2)))
    return (0, node, -1)


def _left_nodes(g: nx.Graph, top: set | None) -> list:
    if top is None:
        top = {n for n, d in g.nodes(data=True) if d.get("bipartite") == 0}
    return sorted(top, key=_node_key)


def maximum_matching(g: nx.Graph, top: set | None = None) -> dict:
    """Maximum-cardinality matching, as left node -> right node.

    Args:
        g: Bipartite graph
        top: Left node set; nodes with ``bipartite=0`` when None
    """
    left = _left_nodes(g, top)
    if g.number_of_edges() == 0:
        return {}
    matching = nx.bipartite.hopcroft_karp_matching(g, top_nodes=left)
    return {u: matching[u] for u in left if u in matching}


def enumerate_maximum_matchings(g: nx.Graph, top: set | None = None) -> Iterator[dict]:
    """Yield every maximum matching exactly once, lazily.

    Left nodes are decided in ascending order, each either matched to an
    unused neighbour (ascending) or left unmatched; a branch is cut as soon
    as the rest of the graph cannot complete a maximum matching.
    """
    left = _left_nodes(g, top)
    target = len(maximum_matching(g, set(left)))
    neighbours = {u: sorted(g.adj[u], key=_node_key) for u in left}

    def completable(index: int, used: set, size: int) -> bool:
        rest = nx.Graph()
        remaining = left[index:]
        rest.add_nodes_from(remaining, bipartite=0)
        for u in remaining:
            for v in neighbours[u]:
                if v not in used:
                    rest.add_edge(u, v)
        return size + len(maximum_matching(rest, set(remaining))) >= target

    def extend(index: int, current: dict, used: set) -> Iterator[dict]:
        if index == len(left):
            if len(current) == target:
                yield dict(current)
            return
        u = left[index]
        for v in neighbours[u]:
            if v in used:
                continue
            current[u] = v
            used.add(v)
            if completable(index + 1, used, len(current)):
                yield from extend(index + 1, current, used)
            used.discard(v)
            del current[u]
        if completable(index + 1, used, len(current)):
            yield from extend(index + 1, current, used)

    yield from extend(0, {}, set())


@dataclass
class ResourceBinding:
    """Concrete registers and addresses for one mapping attempt.

    Attributes:
        reg_map: Virtual register -> hardware register (injective)
        var_map: Variable -> address (non-overlapping extents)
        provenance: (register matching rank, variable matching rank)
        functional: Statement position -> compatible match results (F_B)
        clobbering: Call blocks whose arguments conflict with the binding
        extents: Variable -> reserved byte extent
    """

    reg_map: dict[int, str]
    var_map: dict[str, int]
    provenance: tuple[int, int] = (0, 0)
    functional: dict[int, list[MatchResult]] = field(default_factory=dict)
    clobbering: frozenset[int] = frozenset()
    extents: dict[str, int] = field(default_factory=dict)

    def blocks(self, stmt: int) -> list[int]:
        return sorted({m.block for m in self.functional.get(stmt, [])})

    def match_for(self, stmt: int, block: int) -> MatchResult:
        for match in self.functional[stmt]:
            if match.block == block:
                return match
        raise KeyError((stmt, block))

    def reserved(self) -> list[tuple[int, int]]:
        """(address, size) of every variable cell range."""
        return sorted((addr, self.extents[name]) for name, addr in self.var_map.items())

    def hw_registers(self) -> frozenset[str]:
        return frozenset(self.reg_map.values())

    def to_json(self) -> dict:
        return {
            "registers": {vreg_node(v): g for v, g in sorted(self.reg_map.items())},
            "variables": {name: hex(addr) for name, addr in sorted(self.var_map.items())},
            "provenance": list(self.provenance),
            "functional": {str(s): [hex(b) for b in self.blocks(s)] for s in sorted(self.functional)},
            "clobbering": [hex(b) for b in sorted(self.clobbering)],
        }


def _addr_of_vars(program: SplProgram) -> list[str]:
    names = []
    for stmt in program.statements:
        if stmt.kind == StmtKind.REGSET and isinstance(stmt.value, AddrOf):
            if stmt.value.var not in names:
                names.append(stmt.value.var)
    return names


def variable_graph(candidates: CandidateSet, reg_map: dict[int, str]) -> tuple[nx.Graph, set[str]]:
    """Union of the V_G graphs selected by a register mapping.

    Returns:
        The concrete variable/address graph and the variables that may also
        take any address (their pointer is loaded from a D_M cell)
    """
    graph = nx.Graph()
    graph.add_nodes_from(_addr_of_vars(candidates.program), bipartite=0)
    anywhere: set[str] = set()
    for vreg, greg in reg_map.items():
        vg = candidates.var_graphs.get((vreg, greg))
        if vg is None:
            continue
        for name, addr in vg.edges():
            if isinstance(name, int) or name == ANY_ADDRESS:
                name, addr = addr, name
            if addr == ANY_ADDRESS:
                anywhere.add(name)
            else:
                graph.add_node(addr, bipartite=1)
                graph.add_edge(name, addr)
    return graph, anywhere


def static_cells(
    target: TargetProgram, summaries: dict[int, BlockSummary] | None
) -> list[tuple[int, int]]:
    """Initialized bytes plus every constant-address cell some block reads or writes."""
    cells = [(addr, 1) for addr in sorted(target.memory)]
    for summary in (summaries or {}).values():
        for addr, size in summary.mem_reads:
            if isinstance(addr, Const):
                cells.append((addr.value, size))
        for addr, size, _ in summary.mem_writes:
            if isinstance(addr, Const):
                cells.append((addr.value, size))
    return cells


def _forbidden_cells(
    target: TargetProgram, summaries: dict[int, BlockSummary] | None, candidates: CandidateSet
) -> list[tuple[int, int]]:
    cells = static_cells(target, summaries)
    for _, addr, size in candidates.deref:
        if isinstance(addr, Const):
            cells.append((addr.value, size))
    return cells


def overlaps(addr: int, size: int, ranges: list[tuple[int, int]]) -> bool:
    return any(addr < lo + n and lo < addr + size for lo, n in ranges)


def find_free_range(target: TargetProgram, size: int, blocked: list[tuple[int, int]]) -> int | None:
    """Lowest 8-aligned writable address whose ``size`` bytes avoid every blocked range."""
    for section in sorted(target.writable_sections(), key=lambda s: s.lo):
        addr = (section.lo + 7) // 8 * 8
        while addr + size <= section.hi:
            if not overlaps(addr, size, blocked):
                return addr
            addr += 8
    return None


def place_variables(
    program: SplProgram,
    target: TargetProgram,
    fixed: dict[str, int],
    forbidden: list[tuple[int, int]],
) -> dict[str, int] | None:
    """Place the variables without a fixed address at the lowest free 8-aligned writable address.

    Returns:
        The full variable map, or None if some variable does not fit
    """
    placed = dict(fixed)
    blocked = list(forbidden) + [(addr, program.variables[name].extent) for name, addr in fixed.items()]
    for name, decl in program.variables.items():
        if name in placed:
            continue
        spot = find_free_range(target, decl.extent, blocked)
        if spot is None:
            return None
        placed[name] = spot
        blocked.append((spot, decl.extent))
    return placed


def _compatible(match: MatchResult, reg_map: dict[int, str], var_map: dict[str, int]) -> bool:
    if not match.compatible(reg_map):
        return False
    return all(addr == ANY_ADDRESS or var_map.get(name) == addr for name, addr in match.var_edges)


def bind_resources(
    candidates: CandidateSet,
    reg_matching: dict[int, str],
    target: TargetProgram,
    var_matching: dict[str, int] | None = None,
    summaries: dict[int, BlockSummary] | None = None,
    provenance: tuple[int, int] = (0, 0),
) -> ResourceBinding:
    """Merge a register matching (and variable matching) with the candidate sets.

    Args:
        candidates: Output of candidate collection
        reg_matching: Virtual register -> hardware register
        target: Target program (writable sections for variable placement)
        var_matching: Variable -> address from a V_G matching; the first
            maximum matching when None
        summaries: Block summaries; their constant-address cells are kept
            free of variables
        provenance: Ranks recorded in the binding

    Raises:
        Unsatisfiable: If the mapping leaves some statement without a
            functional block, or the variables cannot be placed
    """
    program = candidates.program
    missing = program.used_vregs() - set(reg_matching)
    if missing:
        raise Unsatisfiable(None, f"virtual registers not mapped: {sorted(missing)}")
    if var_matching is None:
        graph, _ = variable_graph(candidates, reg_matching)
        var_matching = {
            name: addr
            for name, addr in maximum_matching(graph, set(_addr_of_vars(program))).items()
        }

    extents = {name: decl.extent for name, decl in program.variables.items()}
    fixed = dict(var_matching)
    taken: list[tuple[int, int]] = []
    for name, addr in sorted(fixed.items(), key=lambda kv: kv[1]):
        if overlaps(addr, extents[name], taken):
            raise Unsatisfiable(None, f"variable {name} overlaps another variable at {addr:#x}")
        taken.append((addr, extents[name]))

    var_map = place_variables(program, target, fixed, _forbidden_cells(target, summaries, candidates))
    if var_map is None:
        raise Unsatisfiable(None, "no writable space left for the payload variables")

    functional: dict[int, list[MatchResult]] = {}
    for stmt, matches in candidates.matches.items():
        keep = [m for m in matches if _compatible(m, reg_matching, var_map)]
        if not keep:
            raise Unsatisfiable(stmt, f"no functional block for statement {stmt} under this mapping")
        functional[stmt] = keep

    clobbering = set()
    for stmt, matches in candidates.matches.items():
        if program.statements[stmt].kind == StmtKind.CALL:
            good = {m.block for m in functional[stmt]}
            clobbering |= {m.block for m in matches if m.block not in good}

    return ResourceBinding(
        reg_map=dict(reg_matching),
        var_map=var_map,
        provenance=provenance,
        functional=functional,
        clobbering=frozenset(clobbering),
        extents=extents,
    )


def enumerate_bindings(
    candidates: CandidateSet,
    target: TargetProgram,
    summaries: dict[int, BlockSummary] | None = None,
) -> Iterator[ResourceBinding]:
    """Yield every feasible binding, register matchings outermost.

    Raises:
        PipelineFailure: NO_MAPPING when no maximum matching of R_G covers
            the payload's virtual registers
    """
    program = candidates.program
    used = {vreg_node(r) for r in program.used_vregs()}
    best = maximum_matching(candidates.reg_graph, used)
    if len(best) < len(used):
        logger.info(
            "Register mapping graph cannot cover the payload registers",
            extra={"context": {"needed": len(used), "matched": len(best)}},
        )
        raise PipelineFailure(
            FailureKind.NO_MAPPING,
            f"maximum register matching covers {len(best)} of {len(used)} virtual registers",
        )

    addr_vars = set(_addr_of_vars(program))
    for reg_rank, matching in enumerate(enumerate_maximum_matchings(candidates.reg_graph, used)):
        reg_map = {int(u[3:]): g for u, g in matching.items()}
        graph, _ = variable_graph(candidates, reg_map)
        var_matchings = enumerate_maximum_matchings(graph, addr_vars) if addr_vars else iter([{}])
        for var_rank, var_matching in enumerate(var_matchings):
            with custom_span("mapper.bind", {"reg_rank": reg_rank, "var_rank": var_rank}):
                try:
                    binding = bind_resources(
                        candidates, reg_map, target, var_matching, summaries, (reg_rank, var_rank)
                    )
                except Unsatisfiable as e:
                    logger.debug(
                        "Mapping rejected",
                        extra={"context": {"reg_rank": reg_rank, "var_rank": var_rank, "reason": str(e)}},
                    )
                    continue
            logger.info("Resource binding found", extra={"context": binding.to_json()})
            yield binding
