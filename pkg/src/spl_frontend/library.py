"""Bundled payloads, addressable by name."""

from pathlib import Path

from spl_frontend.ast import SplProgram
from spl_frontend.parser import parse_spl

PAYLOAD_DIR = Path(__file__).resolve().parents[2] / "fixtures" / "payloads"

PAYLOAD_NAMES = (
    "regset4",
    "regref4",
    "regset5",
    "regref5",
    "regmod",
    "memrd",
    "memwr",
    "print",
    "execve",
    "abloop",
    "infloop",
    "ifelse",
    "loop",
    "brainfuck",
)


def payload_path(name: str) -> Path:
    """Path of a bundled payload.

    Raises:
        ValueError: If the payload is not bundled
    """
    if name not in PAYLOAD_NAMES:
        supported = ", ".join(PAYLOAD_NAMES)
        raise ValueError(f"Unknown payload: '{name}'. Bundled payloads: {supported}")
    return PAYLOAD_DIR / f"{name}.spl"


def load_payload(name: str) -> SplProgram:
    path = payload_path(name)
    return parse_spl(path.read_text(encoding="utf-8"), filename=path.name)
