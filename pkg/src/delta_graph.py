"""Delta graph of functional blocks and minimum induced subgraph search.

One node set per blockful statement (plus a virtual entry set, ``returnto``
sink sets and a virtual exit). A bundle is a statement-level edge of the
payload's adjacency graph; its weights are context-sensitive dispatcher
distances between the functional blocks of the two sets.
"""

import heapq
import logging
from collections.abc import Hashable
from dataclasses import dataclass, field

import networkx as nx

from errors import FailureKind, PipelineFailure
from expr import Const
from paths import DispatchPath, context_sensitive_shortest_path
from resource_mapper import ResourceBinding
from spl_frontend.ast import StmtKind
from spl_frontend.ir import NEXT, StatementIR
from target_model.summary import BlockSummary
from tracing_config import custom_span

logger = logging.getLogger(__name__)

# Saturating sentinel weight; only produced by the clique reduction
INFINITY = 1 << 62

ENTRY = "entry"
EXIT = "exit"
EXIT_BLOCK = -1


def saturating_add(a: int, b: int) -> int:
    return min(INFINITY, a + b)


def returnto_key(position: int) -> tuple[str, int]:
    return ("returnto", position)


@dataclass(frozen=True)
class Bundle:
    """A required edge between two statement sets."""

    src: Hashable
    dst: Hashable
    label: str = NEXT


@dataclass
class DeltaGraph:
    """Multipartite weighted graph of functional blocks.

    Attributes:
        sets: Set key -> candidate blocks, in search order
        bundles: Required statement-level edges
        weights: Bundle -> (u, v) -> weight
        paths: Bundle -> (u, v) -> dispatcher path realizing the weight
        avoid: Bundle -> blocks excluded from its dispatcher paths
    """

    sets: dict[Hashable, list[int]]
    bundles: list[Bundle]
    weights: dict[Bundle, dict[tuple[int, int], int]]
    paths: dict[Bundle, dict[tuple[int, int], DispatchPath]] = field(default_factory=dict)
    avoid: dict[Bundle, frozenset[int]] = field(default_factory=dict)

    def weight(self, bundle: Bundle, u: int, v: int) -> int | None:
        return self.weights[bundle].get((u, v))

    def total(self, selection: dict[Hashable, int]) -> int | None:
        """Weight of a full selection; None if some bundle has no edge."""
        total = 0
        for bundle in self.bundles:
            w = self.weight(bundle, selection[bundle.src], selection[bundle.dst])
            if w is None:
                return None
            total = saturating_add(total, w)
        return total

    def number_of_edges(self) -> int:
        return sum(len(w) for w in self.weights.values())

    def prune(self) -> Hashable | None:
        """Drop nodes missing an edge for some bundle they take part in.

        Returns:
            The key of a set emptied by pruning, or None
        """
        changed = True
        while changed:
            changed = False
            for bundle in self.bundles:
                edges = self.weights[bundle]
                src_nodes, dst_nodes = set(self.sets[bundle.src]), set(self.sets[bundle.dst])
                has_out = {u for u, v in edges if v in dst_nodes}
                has_in = {v for u, v in edges if u in src_nodes}
                for key, keep in ((bundle.src, has_out), (bundle.dst, has_in)):
                    kept = [b for b in self.sets[key] if b in keep]
                    if len(kept) != len(self.sets[key]):
                        self.sets[key] = kept
                        changed = True
                    if not kept:
                        return key
        return None

    def to_graph(self) -> nx.MultiDiGraph:
        """Node-level view: nodes are (set key, block), edges carry ``weight``."""
        graph = nx.MultiDiGraph()
        for key, blocks in self.sets.items():
            for block in blocks:
                graph.add_node((key, block), part=key)
        for bundle in self.bundles:
            for (u, v), w in self.weights[bundle].items():
                graph.add_edge((bundle.src, u), (bundle.dst, v), key=bundle.label, weight=w)
        return graph


@dataclass(frozen=True)
class InducedSubgraph:
    """H_k: one block per set with the connecting bundle edges."""

    selection: tuple[tuple[Hashable, int], ...]
    weight: int
    rank: int = 0

    def block(self, key: Hashable) -> int:
        return dict(self.selection)[key]

    def blocks(self) -> tuple[int, ...]:
        return tuple(b for _, b in self.selection)

    def as_dict(self) -> dict[Hashable, int]:
        return dict(self.selection)


def _resolve(ir: StatementIR, position: int) -> Hashable:
    """First set reached from ``position`` through blockless statements."""
    program = ir.program
    seen = set()
    while position != ir.exit_node:
        if position in seen:
            raise PipelineFailure(FailureKind.NO_PATH, "payload loops without any blockful statement")
        seen.add(position)
        stmt = program.statements[position]
        if stmt.kind == StmtKind.RETURNTO:
            return returnto_key(position)
        if stmt.kind not in (StmtKind.VARSET, StmtKind.JUMP):
            return position
        (_, position), *_ = ir.adjacency.out_edges(position)
    return EXIT


def statement_bundles(ir: StatementIR) -> list[Bundle]:
    """Bundles of the payload: entry edge plus one per adjacency edge of a blockful statement."""
    bundles = [Bundle(ENTRY, _resolve(ir, 0) if ir.program.statements else EXIT, NEXT)]
    for position, stmt in enumerate(ir.program.statements):
        if stmt.blockless:
            continue
        for _, dst, label in sorted(ir.adjacency.out_edges(position, keys=True)):
            bundles.append(Bundle(position, _resolve(ir, dst), label))
    return bundles


def live_registers(ir: StatementIR) -> tuple[dict[int, set[int]], dict[int, set[int]]]:
    """Virtual registers live into and out of every statement position."""
    program = ir.program
    n = ir.exit_node
    uses = {i: {int(r[1:]) for r in s.reads() if r.startswith("r")} for i, s in enumerate(program.statements)}
    defs = {i: {int(r[1:]) for r in s.writes() if r.startswith("r")} for i, s in enumerate(program.statements)}
    live_in: dict[int, set[int]] = {i: set() for i in range(n + 1)}
    live_out: dict[int, set[int]] = {i: set() for i in range(n + 1)}
    changed = True
    while changed:
        changed = False
        for i in reversed(range(n)):
            out = set().union(*(live_in[d] for d in ir.adjacency.successors(i)))
            inn = uses[i] | (out - defs[i])
            if out != live_out[i] or inn != live_in[i]:
                live_out[i], live_in[i] = out, inn
                changed = True
    return live_in, live_out


def _clobber_set(
    summaries: dict[int, BlockSummary], binding: ResourceBinding, live: set[int]
) -> frozenset[int]:
    hw = {binding.reg_map[r] for r in live if r in binding.reg_map}
    reserved = binding.reserved()
    avoid = set(binding.clobbering)
    for block_id, summary in summaries.items():
        if summary.clobbers() & hw:
            avoid.add(block_id)
            continue
        for addr, size, _ in summary.mem_writes:
            if isinstance(addr, Const) and any(
                addr.value < lo + n and lo < addr.value + size for lo, n in reserved
            ):
                avoid.add(block_id)
                break
    return frozenset(avoid)


def build_delta_graph(
    ir: StatementIR,
    binding: ResourceBinding,
    cfg: nx.DiGraph,
    summaries: dict[int, BlockSummary],
    entry: int,
    limit: int = 128,
) -> DeltaGraph:
    """Build δG for one statement ordering and resource binding.

    Only edges leaving the entry set start from a known (empty) call stack.
    Every other edge is searched with an unknown context, where an empty-stack
    ``ret`` may reach any return site, so its weight is a lower bound on the
    length of the context-correct path. The stitcher searches dispatchers
    again under the real stack.

    Raises:
        PipelineFailure: NO_PATH when pruning empties a statement set
    """
    program = ir.program
    with custom_span("delta.build", {"statements": len(program.statements)}) as span:
        bundles = statement_bundles(ir)
        live_in, live_out = live_registers(ir)

        sets: dict[Hashable, list[int]] = {ENTRY: [entry]}
        for position, stmt in enumerate(program.statements):
            if stmt.blockless:
                continue
            defined = {binding.reg_map[r] for r in stmt.vregs() if r in binding.reg_map and f"r{r}" in stmt.writes()}
            protected = {binding.reg_map[r] for r in live_out[position] if r in binding.reg_map} - defined
            sets[position] = [
                b for b in binding.blocks(position) if not (summaries[b].clobbers() - defined) & protected
            ]
        for bundle in bundles:
            if isinstance(bundle.dst, tuple):
                addr = program.statements[bundle.dst[1]].value
                if addr not in cfg:
                    raise PipelineFailure(
                        FailureKind.NO_PATH, f"returnto target {addr:#x} is not a block", bundle.dst[1]
                    )
                sets[bundle.dst] = [addr]  # type: ignore[list-item]
            elif bundle.dst == EXIT:
                sets[EXIT] = [EXIT_BLOCK]

        weights: dict[Bundle, dict[tuple[int, int], int]] = {}
        paths: dict[Bundle, dict[tuple[int, int], DispatchPath]] = {}
        avoid: dict[Bundle, frozenset[int]] = {}
        for bundle in bundles:
            weights[bundle], paths[bundle] = {}, {}
            if isinstance(bundle.dst, int):
                live = live_in[bundle.dst]
            else:
                live = set()
            avoid[bundle] = _clobber_set(summaries, binding, live)
            for u in sets[bundle.src]:
                for v in sets[bundle.dst]:
                    if bundle.dst == EXIT:
                        weights[bundle][(u, v)] = 0
                        paths[bundle][(u, v)] = DispatchPath(())
                        continue
                    path = context_sensitive_shortest_path(
                        cfg,
                        u,
                        v,
                        avoid[bundle],
                        stack=() if bundle.src == ENTRY else None,
                        allow_empty=bundle.src == ENTRY,
                        limit=limit,
                    )
                    if path is not None:
                        weights[bundle][(u, v)] = path.cost
                        paths[bundle][(u, v)] = path

        dg = DeltaGraph(sets, bundles, weights, paths, avoid)
        emptied = dg.prune()
        span.set_attribute("edges", dg.number_of_edges())
        if emptied is not None:
            statement = emptied if isinstance(emptied, int) else None
            logger.info(
                "Delta graph set emptied by pruning",
                extra={"context": {"set": str(emptied), "binding": list(binding.provenance)}},
            )
            raise PipelineFailure(
                FailureKind.NO_PATH, f"no dispatcher path reaches or leaves set {emptied}", statement
            )
        logger.debug(
            "Built delta graph",
            extra={"context": {"sets": {str(k): len(v) for k, v in sets.items()}, "edges": dg.number_of_edges()}},
        )
        return dg


def induced_subgraphs(dg: DeltaGraph, count: int) -> list[InducedSubgraph]:
    """The ``count`` lightest induced subgraphs, by (weight, blocks in set order).

    Branch and bound over the sets in order; a partial selection is cut when
    its lower bound exceeds the heaviest of the ``count`` best found so far.
    """
    if count < 1:
        return []
    keys = list(dg.sets)
    min_all: dict[Bundle, int | None] = {}
    min_from: dict[Bundle, dict[int, int]] = {}
    min_to: dict[Bundle, dict[int, int]] = {}
    for bundle in dg.bundles:
        edges = dg.weights[bundle]
        min_all[bundle] = min(edges.values()) if edges else None
        min_from[bundle], min_to[bundle] = {}, {}
        for (u, v), w in edges.items():
            min_from[bundle][u] = min(w, min_from[bundle].get(u, INFINITY))
            min_to[bundle][v] = min(w, min_to[bundle].get(v, INFINITY))

    def bound(selection: dict[Hashable, int]) -> int | None:
        total = 0
        for bundle in dg.bundles:
            u, v = selection.get(bundle.src), selection.get(bundle.dst)
            if u is not None and v is not None:
                w = dg.weight(bundle, u, v)
            elif u is not None:
                w = min_from[bundle].get(u)
            elif v is not None:
                w = min_to[bundle].get(v)
            else:
                w = min_all[bundle]
            if w is None:
                return None
            total = saturating_add(total, w)
        return total

    # max-heap of the best ``count`` results as (-weight, negated order key)
    best: list[tuple[int, tuple[int, ...], tuple[int, ...]]] = []

    def worst() -> tuple[int, tuple[int, ...]] | None:
        if len(best) < count:
            return None
        return -best[0][0], best[0][2]

    def search(depth: int, selection: dict[Hashable, int]) -> None:
        lower = bound(selection)
        if lower is None:
            return
        limit = worst()
        if limit is not None and lower > limit[0]:
            return
        if depth == len(keys):
            order = tuple(selection[k] for k in keys)
            if limit is not None and (lower, order) >= limit:
                return
            entry = (-lower, tuple(-b for b in order), order)
            if len(best) < count:
                heapq.heappush(best, entry)
            else:
                heapq.heapreplace(best, entry)
            return
        key = keys[depth]
        for block in sorted(dg.sets[key]):
            selection[key] = block
            search(depth + 1, selection)
            del selection[key]

    search(0, {})
    ranked = sorted((-neg_w, order) for neg_w, _, order in best)
    return [
        InducedSubgraph(tuple(zip(keys, order)), weight, rank)
        for rank, (weight, order) in enumerate(ranked)
    ]


def minimum_induced_subgraph(dg: DeltaGraph, n: int = 0) -> InducedSubgraph | None:
    """The ``n``-th lightest induced subgraph (0-based), or None if fewer exist."""
    if n < 0:
        raise ValueError("rank must be >= 0")
    with custom_span("delta.min_induced_subgraph", {"rank": n}):
        ranked = induced_subgraphs(dg, n + 1)
        return ranked[n] if n < len(ranked) else None


def is_flat(dg: DeltaGraph) -> bool:
    """Whether every bundle points forward in set order."""
    order = {key: i for i, key in enumerate(dg.sets)}
    return all(order[b.src] < order[b.dst] for b in dg.bundles)


def shortest_path_selection(dg: DeltaGraph) -> InducedSubgraph | None:
    """Pick nodes along the shortest path through the forward bundles only.

    The forward bundles must chain the sets in order. Loop bundles are
    ignored while choosing and counted in the returned weight.
    """
    keys = list(dg.sets)
    forward = {(b.src, b.dst): b for b in dg.bundles if keys.index(b.src) < keys.index(b.dst)}
    graph = nx.DiGraph()
    for i in range(len(keys) - 1):
        bundle = forward.get((keys[i], keys[i + 1]))
        if bundle is None:
            raise ValueError(f"sets {keys[i]} and {keys[i + 1]} are not chained")
        for (u, v), w in dg.weights[bundle].items():
            graph.add_edge((i, u), (i + 1, v), weight=w)
    for u in dg.sets[keys[0]]:
        graph.add_edge("source", (0, u), weight=0)
    for v in dg.sets[keys[-1]]:
        graph.add_edge((len(keys) - 1, v), "sink", weight=0)
    try:
        nodes = nx.shortest_path(graph, "source", "sink", weight="weight")
    except (nx.NetworkXNoPath, nx.NodeNotFound):
        return None
    selection = {keys[i]: block for i, block in nodes[1:-1]}
    total = dg.total(selection)
    if total is None:
        return None
    return InducedSubgraph(tuple((k, selection[k]) for k in keys), total)


def reduce_clique_to_delta(r: nx.Graph, k: int) -> DeltaGraph:
    """Encode "does ``r`` have a k-clique" as a delta graph.

    Every set is a copy of ``r``'s vertices (numbered in sorted order) and
    every ordered pair of sets is a bundle. Edges of ``r`` weigh 0; non-edges
    and a vertex paired with itself weigh INFINITY. The lightest induced
    subgraph is finite exactly when a k-clique exists.
    """
    vertices = sorted(r.nodes)
    if k > len(vertices):
        raise ValueError("k exceeds the number of vertices")
    ids = {v: i for i, v in enumerate(vertices)}
    sets: dict[Hashable, list[int]] = {i: list(range(len(vertices))) for i in range(k)}
    bundles = [Bundle(i, j, "clique") for i in range(k) for j in range(k) if i != j]
    weights: dict[Bundle, dict[tuple[int, int], int]] = {}
    for bundle in bundles:
        weights[bundle] = {
            (ids[u], ids[v]): 0 if u != v and r.has_edge(u, v) else INFINITY
            for u in vertices
            for v in vertices
        }
    return DeltaGraph(sets, bundles, weights)
