"""Pretty-printer producing SPL source that re-parses to the same program."""

from expr import to_signed
from spl_frontend.ast import AddrOf, Rvalue, SplProgram, Statement, StmtKind, VarDecl


def format_number(value: int) -> str:
    signed = to_signed(value)
    if signed < 0:
        return str(signed)
    return str(signed) if signed < 256 else hex(signed)


def format_rvalue(value: Rvalue) -> str:
    if isinstance(value, AddrOf):
        return str(value)
    return format_number(value)


def format_string(data: bytes) -> str:
    out = []
    for byte in data:
        if byte == 0:
            out.append("\\0")
        elif byte == 0x22:
            out.append('\\"')
        elif byte == 0x5C:
            out.append("\\\\")
        elif 0x20 <= byte < 0x7F:
            out.append(chr(byte))
        else:
            out.append(f"\\x{byte:02x}")
    return '"' + "".join(out) + '"'


def format_decl(decl: VarDecl) -> str:
    if decl.kind == "string":
        return f"string {decl.name} = {format_string(decl.value)};"  # type: ignore[arg-type]
    if decl.kind == "array":
        items = ", ".join(format_rvalue(v) for v in decl.value)  # type: ignore[union-attr]
        return f"int64* {decl.name} = {{{items}}};"
    return f"int64 {decl.name} = {format_rvalue(decl.value)};"  # type: ignore[arg-type]


def format_statement(stmt: Statement, variables: dict[str, VarDecl]) -> str:
    """Render one statement (without labels)."""
    kind = stmt.kind
    if kind == StmtKind.VARSET:
        return format_decl(variables[stmt.var])  # type: ignore[index]
    if kind == StmtKind.REGSET:
        return f"__r{stmt.reg} = {format_rvalue(stmt.value)};"  # type: ignore[arg-type]
    if kind == StmtKind.REGMOD:
        return f"__r{stmt.reg} {stmt.op}= {format_rvalue(stmt.value)};"  # type: ignore[arg-type]
    if kind == StmtKind.MEMRD:
        return f"__r{stmt.reg} = *__r{stmt.src};"
    if kind == StmtKind.MEMWR:
        return f"*__r{stmt.reg} = __r{stmt.src};"
    if kind == StmtKind.CALL:
        args = ", ".join(f"__r{a}" for a in stmt.args)
        return f"{stmt.name}({args});"
    if kind == StmtKind.COND:
        value = format_rvalue(stmt.value)  # type: ignore[arg-type]
        return f"if (__r{stmt.reg} {stmt.op} {value}) goto {stmt.label};"
    if kind == StmtKind.JUMP:
        return f"goto {stmt.label};"
    return f"returnto {format_rvalue(stmt.value)};"  # type: ignore[arg-type]


def print_spl(program: SplProgram) -> str:
    """Render a program as canonical SPL source."""
    lines = ["void payload() {"]
    for index, stmt in enumerate(program.statements):
        for label in sorted(program.label_at(index)):
            lines.append(f"{label}:")
        lines.append("    " + format_statement(stmt, program.variables))
    for label in sorted(program.label_at(len(program.statements))):
        lines.append(f"{label}:")
    lines.append("}")
    return "\n".join(lines) + "\n"
