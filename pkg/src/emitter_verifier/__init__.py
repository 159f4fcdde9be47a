"""Write-set emission and independent replay verification."""

from .emitter import MemWrite, Plan, StreamInput, WriteSet, emit_writes, plan_from_solution, split_bytes
from .verifier import FAIL, PASS, Divergence, Report, RunReport, verify

__all__ = [
    "FAIL",
    "PASS",
    "Divergence",
    "MemWrite",
    "Plan",
    "Report",
    "RunReport",
    "StreamInput",
    "WriteSet",
    "emit_writes",
    "plan_from_solution",
    "split_bytes",
    "verify",
]
