"""Tests for maximum matchings and resource binding."""

import random

import networkx as nx
import pytest

from block_matcher import collect_candidates
from errors import FailureKind, PipelineFailure, Unsatisfiable
from resource_mapper import (
    bind_resources,
    enumerate_bindings,
    enumerate_maximum_matchings,
    find_free_range,
    maximum_matching,
    place_variables,
)
from spl_frontend import load_payload
from target_model import parse_target, summarize_program


def random_bipartite(rng: random.Random) -> tuple[nx.Graph, list[str]]:
    left = [f"__r{i}" for i in range(rng.randint(1, 4))]
    right = [f"g{i}" for i in range(rng.randint(1, 5))]
    g = nx.Graph()
    g.add_nodes_from(left, bipartite=0)
    g.add_nodes_from(right, bipartite=1)
    for u in left:
        for v in right:
            if rng.random() < 0.45:
                g.add_edge(u, v)
    return g, left


def brute_force_maximum(g: nx.Graph, left: list[str]) -> set[frozenset]:
    found: set[frozenset] = set()

    def walk(index: int, current: dict, used: set) -> None:
        if index == len(left):
            found.add(frozenset(current.items()))
            return
        u = left[index]
        walk(index + 1, current, used)
        for v in g.adj[u]:
            if v not in used:
                current[u] = v
                used.add(v)
                walk(index + 1, current, used)
                used.discard(v)
                del current[u]

    walk(0, {}, set())
    best = max(len(m) for m in found)
    return {m for m in found if len(m) == best}


class TestMatchings:
    """Test cases for maximum matching enumeration."""

    def test_agrees_with_brute_force(self):
        """Enumeration yields every maximum matching exactly once."""
        rng = random.Random(3)
        for _ in range(120):
            g, left = random_bipartite(rng)
            produced = [frozenset(m.items()) for m in enumerate_maximum_matchings(g, set(left))]
            assert len(produced) == len(set(produced))
            assert set(produced) == brute_force_maximum(g, left)

    def test_lexicographic_order(self):
        """Lower left nodes take lower right nodes first."""
        g = nx.complete_bipartite_graph(["__r0", "__r1"], ["g0", "g1"])
        for n in ("__r0", "__r1"):
            g.nodes[n]["bipartite"] = 0
        order = list(enumerate_maximum_matchings(g))
        assert order == [{"__r0": "g0", "__r1": "g1"}, {"__r0": "g1", "__r1": "g0"}]

    def test_numeric_node_order(self):
        """g2 sorts before g10."""
        g = nx.Graph()
        g.add_node("__r0", bipartite=0)
        g.add_edges_from([("__r0", "g10"), ("__r0", "g2")])
        assert next(enumerate_maximum_matchings(g))["__r0"] == "g2"

    def test_empty_graph(self):
        """A graph without edges has one empty maximum matching."""
        g = nx.Graph()
        g.add_node("x", bipartite=0)
        assert maximum_matching(g) == {}
        assert list(enumerate_maximum_matchings(g)) == [{}]


class TestPlacement:
    """Test cases for variable placement."""

    def test_find_free_range(self, t1):
        """The lowest aligned writable address that avoids blocked cells is chosen."""
        assert find_free_range(t1, 8, []) == 0x601000
        assert find_free_range(t1, 16, [(0x601000, 8)]) == 0x601008
        assert find_free_range(t1, 0x3000, []) is None

    def test_place_variables(self, t1):
        """Variables without a fixed address follow each other."""
        program = load_payload("execve")
        placed = place_variables(program, t1, {}, [(0x601000, 8)])
        assert placed == {"prog": 0x601008, "argv": 0x601010}


class TestBindings:
    """Test cases for enumerate_bindings and bind_resources."""

    def test_execve_first_binding(self, t1):
        """The first binding on T1 maps registers in order and places variables after the session pointer."""
        summaries = summarize_program(t1)
        program = load_payload("execve")
        candidates = collect_candidates(t1, summaries, program)
        binding = next(enumerate_bindings(candidates, t1, summaries))
        assert binding.reg_map == {0: "g0", 1: "g1", 2: "g2"}
        assert binding.var_map == {"prog": 0x601008, "argv": 0x601010}
        assert binding.provenance == (0, 0)
        assert binding.blocks(5) == [0x400140]
        assert binding.blocks(2) == [0x400110]
        assert binding.reserved() == [(0x601008, 8), (0x601010, 16)]

    def test_bindings_respect_call(self, t1):
        """Bindings that break the call's argument registers are rejected."""
        summaries = summarize_program(t1)
        candidates = collect_candidates(t1, summaries, load_payload("execve"))
        for binding in enumerate_bindings(candidates, t1, summaries):
            assert binding.reg_map == {0: "g0", 1: "g1", 2: "g2"}

    def test_unmapped_register(self, t1):
        """A register matching that misses a virtual register is unsatisfiable."""
        summaries = summarize_program(t1)
        candidates = collect_candidates(t1, summaries, load_payload("execve"))
        with pytest.raises(Unsatisfiable):
            bind_resources(candidates, {0: "g0", 1: "g1"}, t1)

    def test_no_covering_matching(self, spl):
        """Two registers competing for one hardware register fail with NO_MAPPING."""
        target = parse_target("block 0x10 { set g3, 0x41; ret }")
        summaries = summarize_program(target)
        candidates = collect_candidates(target, summaries, spl("__r0 = 0x41;\n__r1 = 0x41;"))
        with pytest.raises(PipelineFailure) as exc_info:
            list(enumerate_bindings(candidates, target, summaries))
        assert exc_info.value.kind == FailureKind.NO_MAPPING

    def test_binding_report(self, t1):
        """Binding reports use register node names and hex addresses."""
        summaries = summarize_program(t1)
        candidates = collect_candidates(t1, summaries, load_payload("execve"))
        report = next(enumerate_bindings(candidates, t1, summaries)).to_json()
        assert report["registers"] == {"__r0": "g0", "__r1": "g1", "__r2": "g2"}
        assert report["variables"]["prog"] == "0x601008"
