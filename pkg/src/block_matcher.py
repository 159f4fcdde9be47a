"""Semantic matching of SPL statements to target blocks.

Builds the candidate sets C_B, the register mapping graph R_G, one variable
mapping graph V_G per R_G edge, and the dereference set D_M.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass, field

import networkx as nx

from errors import NoCandidate
from expr import COMMUTATIVE_OPS, NEGATED_CMP, BinOp, Const, Expr, Load, Sym, atoms
from spl_frontend.ast import SPL_TO_EXPR_OP, AddrOf, SplProgram, Statement, StmtKind
from target_model.model import ARG_REGS, TargetProgram
from target_model.summary import CALL, SYSCALL, BlockSummary
from tracing_config import custom_span

logger = logging.getLogger(__name__)

# Right-hand V_G node for variables whose address comes from a dereferenced cell
ANY_ADDRESS = "any"

EXACT = "exact"
NEGATED = "negated"


def vreg_node(reg: int) -> str:
    return f"__r{reg}"


@dataclass(frozen=True)
class MatchResult:
    """One way a block realizes a statement.

    Attributes:
        stmt: Statement position
        block: Block id
        pairings: (virtual register, hardware register) pairs the match requires
        var_edges: (variable, address or ANY_ADDRESS) pairs
        deref: (address expression, size) cells read at block entry (D_M)
        branch: For conditionals, ``exact`` or ``negated`` (taken/fall swapped)
    """

    stmt: int
    block: int
    pairings: tuple[tuple[int, str], ...]
    var_edges: tuple[tuple[str, int | str], ...] = ()
    deref: tuple[tuple[Expr, int], ...] = ()
    branch: str | None = None

    def compatible(self, reg_map: dict[int, str]) -> bool:
        return all(reg_map.get(v) == g for v, g in self.pairings)


@dataclass
class CandidateSet:
    """Output of candidate collection.

    Attributes:
        program: Payload (statement positions index ``by_statement``)
        matches: Statement position -> match results (C_B with provenance)
        reg_graph: R_G; left nodes ``__rN``, right nodes ``gN``, edge attribute
            ``contributions`` = set of (statement, block)
        var_graphs: (vreg, greg) -> V_G for that R_G edge
        deref: D_M as (block, address expression, size)
    """

    program: SplProgram
    matches: dict[int, list[MatchResult]]
    reg_graph: nx.Graph
    var_graphs: dict[tuple[int, str], nx.Graph] = field(default_factory=dict)
    deref: list[tuple[int, Expr, int]] = field(default_factory=list)

    def blocks(self, stmt: int) -> list[int]:
        return sorted({m.block for m in self.matches.get(stmt, [])})

    def to_json(self) -> dict:
        """JSON-ready report of candidates per statement."""
        report = {}
        for stmt, results in sorted(self.matches.items()):
            report[str(stmt)] = [
                {
                    "block": hex(m.block),
                    "pairings": {vreg_node(v): g for v, g in m.pairings},
                    "vars": {name: addr if isinstance(addr, str) else hex(addr) for name, addr in m.var_edges},
                    "deref": [[str(a), s] for a, s in m.deref],
                    **({"branch": m.branch} if m.branch else {}),
                }
                for m in results
            ]
        return report


def _match_regset(
    summary: BlockSummary, stmt: Statement, index: int, target: TargetProgram, program: SplProgram
) -> list[MatchResult]:
    results = []
    for g in sorted(summary.written, key=lambda r: int(r[1:])):
        value = summary.reg_writes[g]
        pairing = ((stmt.reg, g),)  # type: ignore[list-item]
        if isinstance(stmt.value, AddrOf):
            extent = program.variables[stmt.value.var].extent
            if isinstance(value, Const) and target.is_writable(value.value, extent):
                results.append(
                    MatchResult(index, summary.block, pairing, ((stmt.value.var, value.value),))  # type: ignore[arg-type]
                )
            elif isinstance(value, Load) and value.epoch == 0 and value.size == 8:
                results.append(
                    MatchResult(
                        index,
                        summary.block,
                        pairing,  # type: ignore[arg-type]
                        ((stmt.value.var, ANY_ADDRESS),),
                        ((value.addr, 8),),
                    )
                )
        else:
            if value == Const(stmt.value):  # type: ignore[arg-type]
                results.append(MatchResult(index, summary.block, pairing))  # type: ignore[arg-type]
            elif isinstance(value, Load) and value.epoch == 0 and value.size == 8:
                results.append(
                    MatchResult(index, summary.block, pairing, (), ((value.addr, 8),))  # type: ignore[arg-type]
                )
    return results


def _match_regmod(summary: BlockSummary, stmt: Statement, index: int) -> list[MatchResult]:
    op = SPL_TO_EXPR_OP.get(stmt.op, stmt.op)  # type: ignore[arg-type]
    constant = Const(stmt.value)  # type: ignore[arg-type]
    results = []
    for g in sorted(summary.written, key=lambda r: int(r[1:])):
        forms = {BinOp(op, Sym(g), constant)}
        if op in COMMUTATIVE_OPS:
            forms.add(BinOp(op, constant, Sym(g)))
        if summary.reg_writes[g] in forms:
            results.append(MatchResult(index, summary.block, ((stmt.reg, g),)))  # type: ignore[arg-type]
    return results


def _match_memrd(summary: BlockSummary, stmt: Statement, index: int) -> list[MatchResult]:
    results = []
    for g_dst in sorted(summary.written, key=lambda r: int(r[1:])):
        value = summary.reg_writes[g_dst]
        if not (
            isinstance(value, Load)
            and value.epoch == 0
            and value.size == 8
            and isinstance(value.addr, Sym)
        ):
            continue
        g_src = value.addr.name
        if (g_dst == g_src) != (stmt.reg == stmt.src):
            continue
        results.append(
            MatchResult(index, summary.block, ((stmt.reg, g_dst), (stmt.src, g_src)))  # type: ignore[arg-type]
        )
    return results


def _match_memwr(summary: BlockSummary, stmt: Statement, index: int) -> list[MatchResult]:
    results = []
    for addr, size, value in summary.mem_writes:
        if size != 8 or not isinstance(addr, Sym) or not isinstance(value, Sym):
            continue
        if (addr == value) != (stmt.reg == stmt.src):
            continue
        results.append(
            MatchResult(index, summary.block, ((stmt.reg, addr.name), (stmt.src, value.name)))  # type: ignore[arg-type]
        )
    return results


def _match_call(summary: BlockSummary, stmt: Statement, index: int) -> list[MatchResult]:
    if summary.jumpkind not in (CALL, SYSCALL) or summary.call != stmt.name:
        return []
    if len(stmt.args) > len(summary.call_args):
        return []
    pairs: dict[int, str] = {}
    for position, vreg in enumerate(stmt.args):
        hw = ARG_REGS[position]
        if pairs.setdefault(vreg, hw) != hw:
            return []
    deref = []
    for hw in summary.call_args[: len(stmt.args)]:
        value = summary.value_of(hw)
        if value == Sym(hw):
            continue
        # an argument register may only be replaced by a word read from entry memory
        if not (isinstance(value, Load) and value.epoch == 0 and value.size == 8):
            return []
        deref.append((value.addr, value.size))
    return [MatchResult(index, summary.block, tuple(sorted(pairs.items())), (), tuple(deref))]


def _match_cond(summary: BlockSummary, stmt: Statement, index: int) -> list[MatchResult]:
    if summary.jumpkind != "boring" or summary.cond is None:
        return []
    expr, op, constant = summary.cond
    if not isinstance(expr, Sym) or constant != stmt.value:
        return []
    if op == stmt.op:
        branch = EXACT
    elif op == NEGATED_CMP[stmt.op]:  # type: ignore[index]
        branch = NEGATED
    else:
        return []
    return [MatchResult(index, summary.block, ((stmt.reg, expr.name),), branch=branch)]  # type: ignore[arg-type]


def match_statement(
    summary: BlockSummary,
    stmt: Statement,
    index: int = 0,
    target: TargetProgram | None = None,
    program: SplProgram | None = None,
) -> list[MatchResult]:
    """Match one block summary against one statement.

    Args:
        summary: Block summary
        stmt: Statement that needs a block
        index: Statement position recorded in the results
        target: Target, needed to check writable addresses for ``&var``
        program: Payload, needed for variable sizes of ``&var``

    Returns:
        One result per admissible register assignment; empty if none
    """
    kind = stmt.kind
    if kind == StmtKind.REGSET:
        if isinstance(stmt.value, AddrOf) and (target is None or program is None):
            raise ValueError("matching &var needs the target and the program")
        return _match_regset(summary, stmt, index, target, program)  # type: ignore[arg-type]
    if kind == StmtKind.REGMOD:
        return _match_regmod(summary, stmt, index)
    if kind == StmtKind.MEMRD:
        return _match_memrd(summary, stmt, index)
    if kind == StmtKind.MEMWR:
        return _match_memwr(summary, stmt, index)
    if kind == StmtKind.CALL:
        return _match_call(summary, stmt, index)
    if kind == StmtKind.COND:
        return _match_cond(summary, stmt, index)
    return []


def collect_candidates(
    target: TargetProgram, summaries: dict[int, BlockSummary], program: SplProgram
) -> CandidateSet:
    """Mark candidate blocks for every blockful statement.

    Raises:
        NoCandidate: If some statement has no candidate block
    """
    with custom_span("matcher.collect_candidates", {"statements": len(program.statements)}) as span:
        matches: dict[int, list[MatchResult]] = {}
        reg_graph = nx.Graph()
        reg_graph.add_nodes_from((vreg_node(r) for r in sorted(program.used_vregs())), bipartite=0)
        contributions: dict[tuple[int, str], set[tuple[int, int]]] = defaultdict(set)
        var_edges: dict[tuple[int, str], set[tuple[str, int | str]]] = defaultdict(set)
        deref: list[tuple[int, Expr, int]] = []

        for index, stmt in enumerate(program.statements):
            if stmt.blockless:
                continue
            results: list[MatchResult] = []
            for block_id in sorted(summaries):
                results.extend(match_statement(summaries[block_id], stmt, index, target, program))
            if not results:
                logger.info(
                    "No candidate blocks for statement",
                    extra={"context": {"statement": index, "kind": stmt.kind.value}},
                )
                raise NoCandidate(index, f"no candidate block for statement {index} ({stmt.kind.value})")
            matches[index] = results
            for match in results:
                for vreg, greg in match.pairings:
                    contributions[(vreg, greg)].add((index, match.block))
                    for edge in match.var_edges:
                        var_edges[(vreg, greg)].add(edge)
                for addr, size in match.deref:
                    entry = (match.block, addr, size)
                    if entry not in deref:
                        deref.append(entry)

        for (vreg, greg), contrib in contributions.items():
            reg_graph.add_node(greg, bipartite=1)
            reg_graph.add_edge(vreg_node(vreg), greg, contributions=contrib)

        var_graphs = {}
        for edge in contributions:
            graph = nx.Graph()
            for name, addr in sorted(var_edges.get(edge, ()), key=str):
                graph.add_node(name, bipartite=0)
                graph.add_node(addr, bipartite=1)
                graph.add_edge(name, addr)
            var_graphs[edge] = graph

        span.set_attribute("candidates", sum(len(v) for v in matches.values()))
        logger.info(
            "Collected candidate blocks",
            extra={
                "context": {
                    "per_statement": {str(k): len({m.block for m in v}) for k, v in matches.items()},
                    "rg_edges": reg_graph.number_of_edges(),
                    "deref": len(deref),
                }
            },
        )
        return CandidateSet(program, matches, reg_graph, var_graphs, deref)


def deref_atoms(candidates: CandidateSet) -> set[Expr]:
    """Atoms appearing in D_M address expressions."""
    found: set[Expr] = set()
    for _, addr, _ in candidates.deref:
        found |= atoms(addr)
    return found
