"""Target programs (TIR): representation, parsing, summaries, CFG_A and concrete execution."""

from .cfg import build_cfg, return_sites
from .machine import Event, MachineState, Trace, execute_concrete, run_effects
from .model import (
    ARG_REGS,
    REGISTERS,
    Block,
    Function,
    Section,
    TargetProgram,
    call_arity,
)
from .parser import parse_target
from .summary import BlockSummary, apply_summary, summarize_block, summarize_program

__all__ = [
    "ARG_REGS",
    "REGISTERS",
    "Block",
    "BlockSummary",
    "Event",
    "Function",
    "MachineState",
    "Section",
    "TargetProgram",
    "Trace",
    "apply_summary",
    "build_cfg",
    "call_arity",
    "execute_concrete",
    "parse_target",
    "return_sites",
    "run_effects",
    "summarize_block",
    "summarize_program",
]
