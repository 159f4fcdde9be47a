"""Tests for write-set emission and replay verification."""

import json

import pytest

from emitter_verifier import FAIL, PASS, MemWrite, Plan, StreamInput, WriteSet, split_bytes, verify
from errors import WriteSetError
from pipeline import compile_payload
from spl_frontend import load_payload
from target_model import parse_target

BIN_SH = 0x0068732F6E69622F

CLOBBER_TARGET = """
section 0x1000..0x2000 flags RW

block 0x10 { set g1, 0x1000; jmp 0x20 }
block 0x20 { store [0x1000, 8], g2; jmp 0x30 }
block 0x30 { set g3, 1; jmp 0x40 }
block 0x40 { ret }
"""


@pytest.fixture
def execve_result(t1, make_config):
    return compile_payload(load_payload("execve"), t1, make_config("execve", "T1"))


class TestWriteSet:
    """Test cases for WriteSet and its file format."""

    def test_execve_write_set(self, execve_result):
        """Variables and entry cells are emitted in address order."""
        assert execve_result.writes.triples() == [
            (0x601000, 0x601020, 8),
            (0x601008, BIN_SH, 8),
            (0x601010, 0x601008, 8),
            (0x601018, 0, 8),
            (0x601030, 0x601008, 8),
            (0x601038, 0x601010, 8),
        ]
        assert execve_result.writes.streams == []

    def test_jsonl_records(self):
        """Each entry is one JSON object with hex address and value."""
        ws = WriteSet([MemWrite(0x601000, 0x41, 1)], [StreamInput("stdin", b".\0")])
        lines = ws.to_jsonl().splitlines()
        assert json.loads(lines[0]) == {"addr": "0x601000", "value": "0x41", "size": 1}
        assert json.loads(lines[1]) == {"stream": "stdin", "bytes": "2e00", "size": 2}
        assert WriteSet.from_jsonl(ws.to_jsonl()) == ws

    @pytest.mark.parametrize(
        "text",
        [
            '{"addr": "0x10", "size": 8}',
            '{"addr": "zz", "value": "0x1", "size": 8}',
            '{"stream": "stdin", "bytes": "2e", "size": 3}',
            "[1, 2]",
            "{not json",
        ],
    )
    def test_malformed_records(self, text):
        """Malformed write-set files raise WriteSetError."""
        with pytest.raises(WriteSetError):
            WriteSet.from_jsonl(text)

    @pytest.mark.parametrize(
        "writes,match",
        [
            ([MemWrite(0x601000, 1, 8), MemWrite(0x601004, 1, 4)], "overlap"),
            ([MemWrite(0x600000, 1, 8)], "outside writable memory"),
            ([MemWrite(0x602FFC, 1, 8)], "outside writable memory"),
            ([MemWrite(0x601000, 1, 3)], "bad size"),
        ],
    )
    def test_validate(self, t1, writes, match):
        """Overlapping, misplaced and odd-sized entries are rejected."""
        with pytest.raises(WriteSetError, match=match):
            WriteSet(writes).validate(t1)

    def test_split_bytes(self):
        """Byte strings are covered with the widest writes first."""
        writes = split_bytes(0x1000, bytes(range(11)))
        assert [(w.addr, w.size) for w in writes] == [(0x1000, 8), (0x1008, 2), (0x100A, 1)]
        assert writes[2].value == 10


class TestPlan:
    """Test cases for the compile plan."""

    def test_plan_contents(self, execve_result):
        """The plan names the binding and one block per statement."""
        plan = execve_result.plan.to_json()
        assert plan["entry"] == "0x400100"
        assert plan["registers"] == {"0": "g0", "1": "g1", "2": "g2"}
        assert plan["variables"] == {"argv": "0x601010", "prog": "0x601008"}
        assert plan["blocks"]["5"] == "0x400140"
        assert Plan.from_json(plan) == execve_result.plan


class TestVerify:
    """Test cases for verify."""

    def test_compiled_write_set_passes(self, execve_result):
        """The natural replay reaches execve with the payload's arguments."""
        report = execve_result.report
        assert report.passed
        natural = report.natural
        assert natural.exit == "ret"
        assert natural.statements_checked == 4
        assert natural.events[0]["name"] == "execve"
        assert natural.events[0]["args"] == ["0x601008", "0x601010", "0x0"]
        assert report.as_dict()["status"] == PASS

    def test_perturbed_write_set_fails(self, t1, execve_result):
        """Pointing the program name elsewhere diverges at the first load."""
        ws = WriteSet(
            [w if w.addr != 0x601030 else MemWrite(0x601030, 0x601010, 8) for w in execve_result.writes.mem]
        )
        report = verify(t1, ws, 0x400100, load_payload("execve"), execve_result.plan)
        assert not report.passed
        divergence = report.natural.divergence
        assert divergence.stmt == 2
        assert divergence.block == 0x400110
        assert report.as_dict()["status"] == FAIL

    def test_missing_session_pointer(self, t1, execve_result):
        """Without the session pointer the first functional block faults."""
        ws = WriteSet([w for w in execve_result.writes.mem if w.addr != 0x601000])
        report = verify(t1, ws, 0x400100, load_payload("execve"), execve_result.plan)
        assert not report.passed
        assert report.natural.divergence.stmt == 2
        assert report.natural.exit == "fault"

    def test_clobbered_variable(self, spl):
        """A dispatcher store into variable memory fails verification."""
        target = parse_target(CLOBBER_TARGET)
        program = spl("__r0 = &x;\n__r1 = 1;\nreturnto 0x40;", "int64 x = 5;")
        plan = Plan(0x10, {0: "g1", 1: "g3"}, {"x": 0x1000}, {1: 0x10, 2: 0x30})
        report = verify(target, WriteSet([MemWrite(0x1000, 5, 8)]), 0x10, program, plan)
        assert "clobbers" in report.natural.divergence.reason
        assert report.natural.divergence.block == 0x20

    def test_unclobbered_variable(self, spl):
        """The same plan passes when the dispatcher leaves the variable alone."""
        target = parse_target(CLOBBER_TARGET.replace("store [0x1000, 8], g2", "set g2, 0"))
        program = spl("__r0 = &x;\n__r1 = 1;\nreturnto 0x40;", "int64 x = 5;")
        plan = Plan(0x10, {0: "g1", 1: "g3"}, {"x": 0x1000}, {1: 0x10, 2: 0x30})
        report = verify(target, WriteSet([MemWrite(0x1000, 5, 8)]), 0x10, program, plan)
        assert report.passed
        assert report.natural.statements_checked == 2

    def test_forced_witness_replay(self, t2, make_config):
        """A forced branch gets its own replay with the witness set on both sides."""
        result = compile_payload(load_payload("ifelse"), t2, make_config("ifelse", "T2"))
        report = result.report
        assert report.passed
        assert [run.name for run in report.runs] == ["natural", "forced:2:taken"]
        forced = report.runs[1]
        assert forced.statements_checked == 4

    def test_loop_bound(self, t2, make_config):
        """An endless payload is checked until fuel runs out."""
        result = compile_payload(load_payload("infloop"), t2, make_config("infloop", "T2", entry=0x41C700))
        natural = result.report.natural
        assert result.report.passed
        assert natural.truncated
        assert natural.loop_bound.endswith("+")
        assert natural.exit == "fuel"
