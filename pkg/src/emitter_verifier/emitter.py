"""Write-set emission: the memory image and stream input that realize a solution.

Write-set files are JSON lines, one record per entry::

    {"addr": "0x601000", "value": "0x68732f6e69622f", "size": 8}
    {"stream": "stdin", "bytes": "2e00", "size": 2}
"""

import logging
from dataclasses import dataclass, field

from errors import WriteSetError
from expr import Sym, size_mask
from spl_frontend.interpreter import initial_bytes
from stitcher import Solution, Witness
from target_model.model import TargetProgram
from tracing_config import custom_span
from utils.encoding import dump_jsonl, load_jsonl, parse_int, to_hex

logger = logging.getLogger(__name__)

ACCESS_SIZES = (8, 4, 2, 1)


@dataclass(frozen=True)
class MemWrite:
    addr: int
    value: int
    size: int

    def to_record(self) -> dict:
        return {"addr": to_hex(self.addr), "value": to_hex(self.value), "size": self.size}


@dataclass(frozen=True)
class StreamInput:
    stream: str
    data: bytes

    @property
    def size(self) -> int:
        return len(self.data)

    def to_record(self) -> dict:
        return {"stream": self.stream, "bytes": self.data.hex(), "size": self.size}


@dataclass
class WriteSet:
    """Memory writes applied before the entry point plus stream input.

    Attributes:
        mem: (address, value, size) entries, ascending address
        streams: Stream contents in delivery order
    """

    mem: list[MemWrite] = field(default_factory=list)
    streams: list[StreamInput] = field(default_factory=list)

    def triples(self) -> list[tuple[int, int, int]]:
        return [(w.addr, w.value, w.size) for w in self.mem]

    def stream(self, name: str) -> bytes:
        return b"".join(s.data for s in self.streams if s.stream == name)

    def validate(self, target: TargetProgram) -> None:
        """Reject overlapping entries and entries outside writable memory.

        Raises:
            WriteSetError: Naming the first offending entry
        """
        ordered = sorted(self.mem, key=lambda w: w.addr)
        for write in ordered:
            if write.size not in ACCESS_SIZES:
                raise WriteSetError(f"bad size {write.size} at {write.addr:#x}")
            if not target.is_writable(write.addr, write.size):
                raise WriteSetError(f"write at {write.addr:#x} is outside writable memory")
        for prev, cur in zip(ordered, ordered[1:]):
            if cur.addr < prev.addr + prev.size:
                raise WriteSetError(f"writes at {prev.addr:#x} and {cur.addr:#x} overlap")

    def to_jsonl(self) -> str:
        return dump_jsonl([w.to_record() for w in self.mem] + [s.to_record() for s in self.streams])

    @classmethod
    def from_jsonl(cls, text: str) -> "WriteSet":
        """Parse a write-set file.

        Raises:
            WriteSetError: On malformed records
        """
        try:
            records = load_jsonl(text)
        except ValueError as e:
            raise WriteSetError(str(e)) from e
        ws = cls()
        for number, record in enumerate(records, start=1):
            try:
                if "stream" in record:
                    data = bytes.fromhex(record["bytes"])
                    if int(record.get("size", len(data))) != len(data):
                        raise WriteSetError(f"record {number}: size does not match the bytes")
                    ws.streams.append(StreamInput(record["stream"], data))
                else:
                    ws.mem.append(
                        MemWrite(parse_int(record["addr"]), parse_int(record["value"]), int(record["size"]))
                    )
            except (KeyError, ValueError, TypeError) as e:
                raise WriteSetError(f"record {number}: {e}") from e
        return ws


def split_bytes(addr: int, data: bytes) -> list[MemWrite]:
    """Cover ``data`` with 8-byte writes, then 4/2/1-byte writes for the tail."""
    writes = []
    offset = 0
    while offset < len(data):
        rest = len(data) - offset
        size = next(s for s in ACCESS_SIZES if s <= rest)
        chunk = data[offset : offset + size]
        writes.append(MemWrite(addr + offset, int.from_bytes(chunk, "little"), size))
        offset += size
    return writes


def emit_writes(solution: Solution, target: TargetProgram) -> WriteSet:
    """Translate a solution into its write-set.

    Variables get their initial contents at their bound addresses; every
    entry cell the constraints mention gets its model value; stream bytes
    read during simulation get theirs.

    Raises:
        WriteSetError: If the entries overlap or leave writable memory
    """
    with custom_span("emitter.emit") as span:
        program = solution.ir.program
        var_map = solution.binding.var_map
        mem: list[MemWrite] = []
        for name, addr in var_map.items():
            mem.extend(split_bytes(addr, initial_bytes(program, name, var_map)))
        for cell in solution.cells:
            mem.append(MemWrite(cell.addr, solution.value_of(cell) & size_mask(cell.size), cell.size))

        streams = []
        symbols = solution.stream_symbols()
        if symbols:
            count = int(symbols[-1].name.rsplit("_", 1)[1]) + 1
            data = bytes(solution.value_of(Sym(f"stdin_{i}")) & 0xFF for i in range(count))
            streams.append(StreamInput("stdin", data))

        ws = WriteSet(sorted(mem, key=lambda w: w.addr), streams)
        ws.validate(target)
        span.set_attribute("writes", len(ws.mem))
        logger.info(
            "Emitted write-set",
            extra={"context": {"writes": len(ws.mem), "streams": [s.size for s in ws.streams]}},
        )
        return ws


@dataclass
class Plan:
    """What a compiled payload expects of the target; input of ``verify``.

    Attributes:
        entry: Entry block
        registers: Virtual register -> hardware register
        variables: Variable -> address
        blocks: Statement position -> functional block
        witnesses: Branch witnesses of the conditionals
        order: Source position of each statement; empty for source order
    """

    entry: int
    registers: dict[int, str]
    variables: dict[str, int]
    blocks: dict[int, int]
    witnesses: list[Witness] = field(default_factory=list)
    order: tuple[int, ...] = ()

    def to_json(self) -> dict:
        return {
            "entry": to_hex(self.entry),
            "registers": {str(v): g for v, g in sorted(self.registers.items())},
            "variables": {name: to_hex(addr) for name, addr in sorted(self.variables.items())},
            "blocks": {str(s): to_hex(b) for s, b in sorted(self.blocks.items())},
            "witnesses": [w.as_dict() for w in self.witnesses],
            "order": list(self.order),
        }

    @classmethod
    def from_json(cls, data: dict) -> "Plan":
        return cls(
            entry=parse_int(data["entry"]),
            registers={int(v): g for v, g in data["registers"].items()},
            variables={name: parse_int(addr) for name, addr in data["variables"].items()},
            blocks={int(s): parse_int(b) for s, b in data["blocks"].items()},
            witnesses=[
                Witness(w["stmt"], w["label"], w["vreg"], w["reg"], parse_int(w["value"]), w["forced"])
                for w in data.get("witnesses", [])
            ],
            order=tuple(data.get("order", ())),
        )


def plan_from_solution(solution: Solution, order: tuple[int, ...] = ()) -> Plan:
    return Plan(
        entry=solution.entry,
        registers=dict(solution.binding.reg_map),
        variables=dict(solution.binding.var_map),
        blocks=dict(solution.plan),
        witnesses=list(solution.witnesses),
        order=tuple(order),
    )
