"""Context-sensitive dispatcher paths over CFG_A.

Paths are searched in the expanded state space (block, call stack) so that
every ``ret`` goes back to the site of the call that entered the function.
A search started with an unknown context lets an empty-stack ``ret`` flow to
any return site of the function.
"""

import logging
from collections import deque
from collections.abc import Iterator
from dataclasses import dataclass

import networkx as nx

logger = logging.getLogger(__name__)

MAX_CALL_DEPTH = 16

# Externals that end the program; never used to route control
TERMINAL_CALLS = frozenset({"exit"})

Stack = tuple[int, ...]
State = tuple[int, Stack]


@dataclass(frozen=True)
class DispatchPath:
    """Blocks executed after the source, up to and including the destination.

    Attributes:
        blocks: Executed block ids, destination last (empty when src == dst)
        stack: Call stack on arrival at the destination
    """

    blocks: tuple[int, ...]
    stack: Stack = ()

    @property
    def cost(self) -> int:
        return len(self.blocks)


def successors(
    cfg: nx.DiGraph, block: int, stack: Stack, unknown_context: bool = False
) -> Iterator[tuple[int, Stack, str]]:
    """Context-respecting successors of a state, in ascending block order."""
    for dst in sorted(cfg.successors(block)):
        data = cfg.edges[block, dst]
        kind = data["kind"]
        if kind == "call":
            ret = data["ret"]
            if ret in stack or len(stack) >= MAX_CALL_DEPTH:
                continue
            yield dst, stack + (ret,), kind
        elif kind == "ret":
            if stack:
                if stack[-1] == dst:
                    yield dst, stack[:-1], kind
            elif unknown_context:
                yield dst, stack, kind
        elif kind == "extcall" and data.get("callee") in TERMINAL_CALLS:
            continue
        else:
            yield dst, stack, kind


def context_sensitive_shortest_path(
    cfg: nx.DiGraph,
    src: int,
    dst: int,
    avoid: set[int] | frozenset[int] = frozenset(),
    stack: Stack | None = (),
    allow_empty: bool = True,
    limit: int | None = None,
) -> DispatchPath | None:
    """Shortest executed-block path from ``src`` to ``dst`` honoring call/return.

    Args:
        cfg: CFG_A
        src: Block just executed
        dst: Block to reach
        avoid: Blocks that may not appear before ``dst``
        stack: Call stack at ``src``; None for an unknown context
        allow_empty: Accept the empty path when ``src == dst``
        limit: Maximum cost

    Returns:
        The path, or None if ``dst`` is unreachable
    """
    if src not in cfg or dst not in cfg:
        raise ValueError(f"unknown block {src if src not in cfg else dst:#x}")
    unknown = stack is None
    start: Stack = () if stack is None else stack
    if src == dst and allow_empty:
        return DispatchPath((), start)

    parents: dict[State, State | None] = {}
    queue: deque[tuple[State, int]] = deque()
    for nxt, nstack, _ in successors(cfg, src, start, unknown):
        state = (nxt, nstack)
        if state not in parents and (nxt == dst or nxt not in avoid):
            parents[state] = None
            queue.append((state, 1))

    while queue:
        state, cost = queue.popleft()
        block, st = state
        if block == dst:
            path = []
            node: State | None = state
            while node is not None:
                path.append(node[0])
                node = parents[node]
            return DispatchPath(tuple(reversed(path)), st)
        if limit is not None and cost >= limit:
            continue
        for nxt, nstack, _ in successors(cfg, block, st, unknown):
            nstate = (nxt, nstack)
            if nstate in parents or (nxt != dst and nxt in avoid):
                continue
            parents[nstate] = state
            queue.append((nstate, cost + 1))
    return None


def _state_graph(
    cfg: nx.DiGraph,
    src: int,
    dst: int,
    avoid: set[int] | frozenset[int],
    stack: Stack | None,
    limit: int,
) -> nx.DiGraph:
    unknown = stack is None
    start_stack: Stack = () if stack is None else stack
    graph = nx.DiGraph()
    graph.add_node("start")
    graph.add_node("sink")
    seen: dict[State, int] = {}
    queue: deque[State] = deque()

    def visit(parent, nxt: int, nstack: Stack, depth: int) -> None:
        if nxt != dst and nxt in avoid:
            return
        state = (nxt, nstack)
        graph.add_edge(parent, state, weight=1)
        if state not in seen:
            seen[state] = depth
            if nxt == dst:
                graph.add_edge(state, "sink", weight=0)
            else:
                queue.append(state)

    for nxt, nstack, _ in successors(cfg, src, start_stack, unknown):
        visit("start", nxt, nstack, 1)
    while queue:
        state = queue.popleft()
        depth = seen[state]
        if depth >= limit:
            continue
        for nxt, nstack, _ in successors(cfg, state[0], state[1], unknown):
            visit(state, nxt, nstack, depth + 1)
    return graph


def k_shortest_dispatcher_paths(
    cfg: nx.DiGraph,
    src: int,
    dst: int,
    k: int,
    avoid: set[int] | frozenset[int] = frozenset(),
    stack: Stack | None = (),
    limit: int = 128,
    allow_empty: bool = False,
) -> list[DispatchPath]:
    """Up to ``k`` dispatcher paths in ascending cost.

    Paths are simple in the (block, stack) state space and never pass
    through ``dst`` before their end.

    Args:
        cfg: CFG_A
        src: Functional block just executed
        dst: Next functional block
        k: Number of paths wanted
        avoid: Clobbering blocks
        stack: Call stack at ``src``; None for an unknown context
        limit: Maximum path cost (L)
        allow_empty: Yield the empty path first when ``src == dst``

    Returns:
        The paths; empty if ``dst`` is unreachable within ``limit``
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    found: list[DispatchPath] = []
    if src == dst and allow_empty:
        found.append(DispatchPath((), () if stack is None else stack))
        if k == 1:
            return found

    graph = _state_graph(cfg, src, dst, avoid, stack, limit)
    try:
        for states in nx.shortest_simple_paths(graph, "start", "sink", weight="weight"):
            inner = states[1:-1]
            if len(inner) > limit:
                break
            found.append(DispatchPath(tuple(b for b, _ in inner), inner[-1][1]))
            if len(found) >= k:
                break
    except nx.NetworkXNoPath:
        pass
    logger.debug(
        "Dispatcher candidates",
        extra={"context": {"src": hex(src), "dst": hex(dst), "found": [p.cost for p in found]}},
    )
    return found


def check_return_discipline(
    cfg: nx.DiGraph, blocks: list[int], stack: Stack = ()
) -> int | None:
    """Index of the first transition that is not a CFG edge or breaks call/return pairing.

    Args:
        cfg: CFG_A
        blocks: Executed blocks in order
        stack: Call stack before the first block

    Returns:
        Index ``i`` such that ``blocks[i] -> blocks[i+1]`` is invalid, or None
    """
    st = list(stack)
    for i in range(len(blocks) - 1):
        src, dst = blocks[i], blocks[i + 1]
        if not cfg.has_edge(src, dst):
            return i
        data = cfg.edges[src, dst]
        kind = data["kind"]
        if kind == "call":
            st.append(data["ret"])
        elif kind == "ret":
            if not st or st[-1] != dst:
                return i
            st.pop()
    return None
