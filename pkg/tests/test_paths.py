"""Tests for context-sensitive dispatcher paths."""

import networkx as nx
import pytest

from paths import (
    DispatchPath,
    check_return_discipline,
    context_sensitive_shortest_path,
    k_shortest_dispatcher_paths,
)
from target_model import build_cfg


class TestShortestPath:
    """Test cases for context_sensitive_shortest_path."""

    def test_context_unaware_path_breaks_returns(self, t3):
        """The plain shortest path returns to the wrong call site."""
        cfg = build_cfg(t3)
        naive = nx.shortest_path(cfg, 0x500000, 0x500110)
        assert naive == [0x500000, 0x500010, 0x510000, 0x500110]
        assert check_return_discipline(cfg, naive) == 2

    def test_context_sensitive_path(self, t3):
        """Returns go back to the call that entered the helper."""
        cfg = build_cfg(t3)
        path = context_sensitive_shortest_path(cfg, 0x500000, 0x500110)
        assert path.blocks == (0x500010, 0x510000, 0x500020, 0x500030, 0x500100, 0x510000, 0x500110)
        assert path.cost == 7
        assert path.stack == ()
        assert check_return_discipline(cfg, [0x500000, *path.blocks]) is None

    def test_unknown_context_return(self, t3):
        """An empty-stack return may go to any site only in an unknown context."""
        cfg = build_cfg(t3)
        assert context_sensitive_shortest_path(cfg, 0x510000, 0x500110, stack=None).blocks == (0x500110,)
        assert context_sensitive_shortest_path(cfg, 0x510000, 0x500110, stack=()) is None

    def test_unknown_context_is_lower_bound(self, t3):
        """Unknown-context distances never exceed the distances from an empty stack."""
        cfg = build_cfg(t3)
        for src in t3.blocks:
            for dst in t3.blocks:
                known = context_sensitive_shortest_path(cfg, src, dst, stack=())
                if known is not None:
                    assert context_sensitive_shortest_path(cfg, src, dst, stack=None).cost <= known.cost

    def test_terminal_calls_do_not_route(self, t1):
        """Paths never continue past exit."""
        cfg = build_cfg(t1)
        assert context_sensitive_shortest_path(cfg, 0x400200, 0x400210).cost == 1
        assert context_sensitive_shortest_path(cfg, 0x400200, 0x400150) is None

    def test_empty_path(self, t1):
        """A block reaches itself with the empty path."""
        cfg = build_cfg(t1)
        assert context_sensitive_shortest_path(cfg, 0x400100, 0x400100) == DispatchPath(())

    def test_avoid(self, t2):
        """Avoided blocks force the longer route."""
        cfg = build_cfg(t2)
        path = context_sensitive_shortest_path(cfg, 0x403C20, 0x403D50, avoid={0x403D10}, stack=None)
        assert path.cost == 7
        assert 0x403E00 in path.blocks

    def test_unknown_block(self, t1):
        """Unknown blocks raise ValueError."""
        with pytest.raises(ValueError):
            context_sensitive_shortest_path(build_cfg(t1), 0x400100, 0x999)


class TestKShortest:
    """Test cases for k_shortest_dispatcher_paths."""

    def test_taken_side_routes(self, t2):
        """Both routes of the taken side come out, shortest first."""
        cfg = build_cfg(t2)
        paths = k_shortest_dispatcher_paths(cfg, 0x403C20, 0x403D50, 8, stack=None)
        assert [p.cost for p in paths] == [6, 7]
        assert paths[0].blocks[:2] == (0x403D00, 0x403D10)

    def test_limit(self, t2):
        """Paths longer than the limit are dropped."""
        cfg = build_cfg(t2)
        paths = k_shortest_dispatcher_paths(cfg, 0x403C20, 0x403D50, 8, stack=None, limit=6)
        assert [p.cost for p in paths] == [6]

    def test_k_bounds_result(self, t2):
        """At most k paths are returned."""
        cfg = build_cfg(t2)
        assert len(k_shortest_dispatcher_paths(cfg, 0x403C20, 0x403D50, 1, stack=None)) == 1
        with pytest.raises(ValueError):
            k_shortest_dispatcher_paths(cfg, 0x403C20, 0x403D50, 0)

    def test_loop_dispatcher(self, t2):
        """The worker loop comes back to its head through the timer call."""
        cfg = build_cfg(t2)
        (path,) = k_shortest_dispatcher_paths(cfg, 0x41C700, 0x41C700, 8)
        assert path.cost == 27
        assert path.blocks[-1] == 0x41C700
        assert 0x41D000 in path.blocks
        assert check_return_discipline(cfg, [0x41C700, *path.blocks]) is None

    def test_allow_empty(self, t2):
        """The empty path comes first when allowed."""
        cfg = build_cfg(t2)
        paths = k_shortest_dispatcher_paths(cfg, 0x41C700, 0x41C700, 2, allow_empty=True)
        assert [p.cost for p in paths] == [0, 27]

    def test_unreachable(self, t2):
        """Unreachable destinations give no paths."""
        cfg = build_cfg(t2)
        assert k_shortest_dispatcher_paths(cfg, 0x403C30, 0x403D00, 4) == []
