"""Artifact helpers: DOT rendering and hex/JSON encoding."""

from .dot import delta_to_dot, subgraph_to_dot
from .encoding import dump_json, dump_jsonl, load_jsonl, parse_int, to_hex

__all__ = [
    "delta_to_dot",
    "dump_json",
    "dump_jsonl",
    "load_jsonl",
    "parse_int",
    "subgraph_to_dot",
    "to_hex",
]
