"""CFG_A: the target's control-flow graph annotated with block summaries."""

import logging
from collections import defaultdict

import networkx as nx

from target_model.model import Br, Call, ICall, IJmp, Jmp, Ret, Syscall, TargetProgram
from target_model.summary import BlockSummary

logger = logging.getLogger(__name__)


def return_sites(target: TargetProgram) -> dict[str, list[int]]:
    """Function name -> ids of the blocks its callers return to."""
    sites: dict[str, list[int]] = defaultdict(list)
    for block in target.blocks.values():
        term = block.terminator
        if isinstance(term, Call) and not target.is_external(term.callee):
            sites[term.callee].append(term.ret)
        elif isinstance(term, ICall):
            for callee in term.callees:
                sites[callee].append(term.ret)
    return {name: sorted(set(ids)) for name, ids in sites.items()}


def build_cfg(
    target: TargetProgram, summaries: dict[int, BlockSummary] | None = None
) -> nx.DiGraph:
    """Build CFG_A.

    Edge ``kind`` is one of ``jmp``, ``taken``, ``fall``, ``branch`` (both arms to
    the same block), ``call`` (to a callee entry, with ``ret``), ``extcall``,
    ``syscall``, ``ijmp`` or ``ret``. A ret block gets an edge to every return
    site of its function.
    """
    cfg = nx.DiGraph()
    for block_id in target.blocks:
        attrs = {"function": target.blocks[block_id].function}
        if summaries is not None:
            attrs["summary"] = summaries[block_id]
        cfg.add_node(block_id, **attrs)

    sites = return_sites(target)
    for block in target.blocks.values():
        term = block.terminator
        if isinstance(term, Jmp):
            cfg.add_edge(block.id, term.target, kind="jmp")
        elif isinstance(term, Br):
            if term.taken == term.fall:
                cfg.add_edge(block.id, term.taken, kind="branch")
            else:
                cfg.add_edge(block.id, term.taken, kind="taken")
                cfg.add_edge(block.id, term.fall, kind="fall")
        elif isinstance(term, Call):
            if target.is_external(term.callee):
                cfg.add_edge(block.id, term.ret, kind="extcall", callee=term.callee)
            else:
                cfg.add_edge(
                    block.id, target.functions[term.callee].entry, kind="call", ret=term.ret
                )
        elif isinstance(term, ICall):
            for callee in term.callees:
                cfg.add_edge(block.id, target.functions[callee].entry, kind="call", ret=term.ret)
        elif isinstance(term, Syscall):
            cfg.add_edge(block.id, term.next, kind="syscall", callee=term.name)
        elif isinstance(term, IJmp):
            for dst in term.targets:
                cfg.add_edge(block.id, dst, kind="ijmp")
        elif isinstance(term, Ret):
            for site in sites.get(block.function, []):
                cfg.add_edge(block.id, site, kind="ret")

    logger.debug(
        "Built CFG",
        extra={"context": {"nodes": cfg.number_of_nodes(), "edges": cfg.number_of_edges()}},
    )
    return cfg
