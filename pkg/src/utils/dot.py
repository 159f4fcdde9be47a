"""Graphviz DOT rendering of delta graphs and induced subgraphs."""

from collections.abc import Hashable

from delta_graph import ENTRY, EXIT, DeltaGraph, InducedSubgraph


def _set_label(key: Hashable) -> str:
    if key == ENTRY:
        return "entry"
    if key == EXIT:
        return "exit"
    if isinstance(key, tuple):
        return f"returnto@{key[1]}"
    return f"stmt {key}"


def _node_id(key: Hashable, block: int) -> str:
    return f'"{_set_label(key)}:{block:#x}"' if block >= 0 else f'"{_set_label(key)}"'


def delta_to_dot(dg: DeltaGraph, hk: InducedSubgraph | None = None, name: str = "delta") -> str:
    """Render δG; nodes and edges of ``hk`` are drawn bold red.

    One cluster per statement set, edges labeled with their weight and
    bundle label.
    """
    chosen = hk.as_dict() if hk is not None else {}
    lines = [f"digraph {name} {{", "  rankdir=LR;", "  node [shape=box, fontname=monospace];"]
    for index, (key, blocks) in enumerate(dg.sets.items()):
        lines.append(f"  subgraph cluster_{index} {{")
        lines.append(f'    label="{_set_label(key)}";')
        for block in blocks:
            text = _set_label(key) if block < 0 else f"{block:#x}"
            style = ", color=red, penwidth=2" if chosen.get(key) == block else ""
            lines.append(f'    {_node_id(key, block)} [label="{text}"{style}];')
        lines.append("  }")
    for bundle in dg.bundles:
        for (u, v), weight in sorted(dg.weights[bundle].items()):
            on_path = chosen.get(bundle.src) == u and chosen.get(bundle.dst) == v
            style = ", color=red, penwidth=2" if on_path else ""
            lines.append(
                f'  {_node_id(bundle.src, u)} -> {_node_id(bundle.dst, v)} '
                f'[label="{weight} ({bundle.label})"{style}];'
            )
    lines.append("}")
    return "\n".join(lines) + "\n"


def subgraph_to_dot(dg: DeltaGraph, hk: InducedSubgraph, name: str = "hk") -> str:
    """Render only the selected blocks of ``hk`` and the bundle edges between them."""
    chosen = hk.as_dict()
    lines = [f"digraph {name} {{", "  rankdir=LR;", "  node [shape=box, fontname=monospace];"]
    lines.append(f'  label="H_{hk.rank} weight {hk.weight}";')
    for key, block in chosen.items():
        text = _set_label(key) if block < 0 else f"{_set_label(key)}\\n{block:#x}"
        lines.append(f'  {_node_id(key, block)} [label="{text}"];')
    for bundle in dg.bundles:
        u, v = chosen[bundle.src], chosen[bundle.dst]
        weight = dg.weight(bundle, u, v)
        lines.append(
            f'  {_node_id(bundle.src, u)} -> {_node_id(bundle.dst, v)} [label="{weight} ({bundle.label})"];'
        )
    lines.append("}")
    return "\n".join(lines) + "\n"
