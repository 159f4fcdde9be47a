"""Tests for the compile pipeline."""

import pickle

import pytest

from errors import FailureKind, NoCandidate, PipelineFailure
from pipeline import (
    CompileStats,
    FailureLog,
    cache_path,
    compile_payload,
    load_summaries,
    resolve_entry,
)
from spl_frontend import load_payload
from target_model import parse_target, summarize_program


class TestCompile:
    """End-to-end compile runs on the fixture targets."""

    def test_execve_on_t1(self, t1, make_config):
        """execve compiles on the first ordering and verifies."""
        result = compile_payload(load_payload("execve"), t1, make_config("execve", "T1"))
        assert result.report.passed
        assert result.order == (0, 1, 2, 3, 4, 5)
        assert result.stats.permutations == 1
        assert result.stats.mappings == 1
        assert result.solution.subgraph_rank == 0

    def test_infloop_on_t2(self, t2, make_config):
        """The loop closes through the long worker dispatcher."""
        result = compile_payload(load_payload("infloop"), t2, make_config("infloop", "T2", entry=0x41C700))
        assert result.report.passed
        assert result.binding.reg_map == {0: "g3"}
        assert result.stats.longest_dispatcher >= 26

    def test_ifelse_on_t2(self, t2, make_config):
        """Both branches of the conditional are stitched."""
        result = compile_payload(load_payload("ifelse"), t2, make_config("ifelse", "T2"))
        assert result.report.passed
        assert result.binding.reg_map == {0: "g3", 1: "g4", 2: "g5"}
        assert result.stats.dispatcher_rejected >= 1

    def test_single_dispatcher_candidate(self, t2, make_config):
        """K=1 leaves only the faulting taken route."""
        with pytest.raises(PipelineFailure) as exc_info:
            compile_payload(load_payload("ifelse"), t2, make_config("ifelse", "T2", K=1))
        assert exc_info.value.kind == FailureKind.NO_PATH
        assert exc_info.value.kind.exit_code == 5

    def test_no_candidate(self, t1, spl, make_config):
        """A statement no block realizes fails with NO_CANDIDATES."""
        with pytest.raises(PipelineFailure) as exc_info:
            compile_payload(spl("__r0 += 5;"), t1, make_config("execve", "T1"))
        assert isinstance(exc_info.value, NoCandidate)
        assert exc_info.value.kind == FailureKind.NO_CANDIDATES

    def test_jobs_are_deterministic(self, t2, make_config):
        """Parallel orderings pick the same result as the sequential search."""
        program = load_payload("ifelse")
        sequential = compile_payload(program, t2, make_config("ifelse", "T2"))
        parallel = compile_payload(program, t2, make_config("ifelse", "T2", jobs=4))
        assert parallel.order == sequential.order
        assert parallel.writes == sequential.writes
        assert parallel.plan == sequential.plan


class TestFailureLog:
    """Test cases for the dominant failure rule."""

    def test_deepest_failure_wins(self):
        """A deeper stage replaces a shallower one; ties keep the first."""
        log = FailureLog()
        log.record(PipelineFailure(FailureKind.NO_MAPPING, "first mapping"))
        log.record(PipelineFailure(FailureKind.NO_PATH, "first path"))
        log.record(PipelineFailure(FailureKind.NO_PATH, "second path"))
        log.record(PipelineFailure(FailureKind.NO_MAPPING, "second mapping"))
        assert log.dominant.message == "first path"
        assert log.counts == {"NO_MAPPING": 2, "NO_PATH": 2}

    def test_merge(self):
        """Merging sums counts and keeps the deeper dominant failure."""
        left, right = FailureLog(), FailureLog()
        left.record(PipelineFailure(FailureKind.NO_PATH, "path"))
        right.record(PipelineFailure(FailureKind.UNSAT, "unsat"))
        left.merge(right)
        assert left.dominant.kind == FailureKind.UNSAT
        assert sum(left.counts.values()) == 2

    def test_empty_log(self):
        """An empty log reports that no mapping was produced."""
        with pytest.raises(PipelineFailure) as exc_info:
            FailureLog().raise_dominant()
        assert exc_info.value.kind == FailureKind.NO_MAPPING

    def test_stats_absorb(self):
        """Counters add up; maxima stay maxima."""
        total = CompileStats(candidates=3, permutations=1, longest_dispatcher=4)
        total.absorb(CompileStats(candidates=2, permutations=1, mappings=2, longest_dispatcher=9))
        assert total.as_dict()["permutations"] == 2
        assert total.mappings == 2
        assert total.candidates == 3
        assert total.longest_dispatcher == 9


class TestSummaryCache:
    """Test cases for the block summary cache."""

    def test_write_then_hit(self, t1, tmp_path):
        """Summaries are stored under the target digest and read back."""
        first = load_summaries(t1, tmp_path)
        path = cache_path(tmp_path, t1)
        assert path.exists()
        assert path.name.startswith(t1.digest)
        assert load_summaries(t1, tmp_path) == first

    def test_corrupt_cache_is_rewritten(self, t1, tmp_path):
        """An unreadable cache file is ignored and replaced."""
        path = cache_path(tmp_path, t1)
        path.write_bytes(b"not a pickle")
        summaries = load_summaries(t1, tmp_path)
        assert set(summaries) == set(t1.blocks)
        with path.open("rb") as f:
            assert set(pickle.load(f)) == set(t1.blocks)

    def test_stale_cache_is_ignored(self, t1, tmp_path):
        """A cache for other blocks is not used."""
        path = cache_path(tmp_path, t1)
        path.write_bytes(pickle.dumps({0x10: None}))
        assert load_summaries(t1, tmp_path) == summarize_program(t1)

    def test_no_cache_dir(self, t1):
        """Without a directory summaries are computed directly."""
        assert set(load_summaries(t1, None)) == set(t1.blocks)


class TestResolveEntry:
    """Test cases for resolve_entry."""

    def test_declared_and_explicit(self, t1):
        """An explicit entry wins over the declared one."""
        assert resolve_entry(t1, None) == 0x400100
        assert resolve_entry(t1, 0x400200) == 0x400200

    def test_missing_entry(self):
        """No entry anywhere raises ValueError."""
        with pytest.raises(ValueError):
            resolve_entry(parse_target("block 0x10 { ret }"), None)
        with pytest.raises(ValueError):
            resolve_entry(parse_target("block 0x10 { ret }"), 0x20)
