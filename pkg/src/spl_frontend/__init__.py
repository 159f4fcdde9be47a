"""SPL payload frontend: parsing, statement IR and the reference interpreter."""

from .ast import AddrOf, SplProgram, Statement, StmtKind, VarDecl
from .interpreter import ExitReason, SplResult, interpret_spl, layout_variables
from .ir import StatementIR, build_statement_ir, enumerate_permutations, reorder
from .library import PAYLOAD_NAMES, load_payload, payload_path
from .parser import parse_spl
from .printer import print_spl

__all__ = [
    "AddrOf",
    "ExitReason",
    "PAYLOAD_NAMES",
    "SplProgram",
    "SplResult",
    "Statement",
    "StatementIR",
    "StmtKind",
    "VarDecl",
    "build_statement_ir",
    "enumerate_permutations",
    "interpret_spl",
    "layout_variables",
    "load_payload",
    "parse_spl",
    "payload_path",
    "print_spl",
    "reorder",
]
