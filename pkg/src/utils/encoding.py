"""Hex and JSON helpers for artifacts (write-sets, plans, reports)."""

import json
from collections.abc import Iterable
from typing import Any


def to_hex(value: int) -> str:
    """Render an integer as ``0x``-prefixed lowercase hex.

    Examples:
        >>> to_hex(255)
        '0xff'
    """
    return hex(value)


def parse_int(text: str | int) -> int:
    """Parse a decimal or ``0x`` hex integer.

    Raises:
        ValueError: If the text is not an integer literal
    """
    if isinstance(text, int):
        return text
    return int(str(text).strip(), 0)


def dump_json(data: Any) -> str:
    """Deterministic JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def dump_jsonl(records: Iterable[dict]) -> str:
    """One compact JSON object per line, keys in insertion order."""
    return "".join(json.dumps(record, separators=(", ", ": ")) + "\n" for record in records)


def load_jsonl(text: str) -> list[dict]:
    """Parse JSON lines; blank lines are skipped.

    Raises:
        ValueError: On a malformed line, naming its 1-based number
    """
    records = []
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise ValueError(f"line {number}: {e.msg}") from e
        if not isinstance(record, dict):
            raise ValueError(f"line {number}: expected an object")
        records.append(record)
    return records
