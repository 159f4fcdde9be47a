"""Parser and linker for the TIR text format (see docs/TIR.md)."""

import hashlib
import logging
import re

from errors import TirLinkError, TirSyntaxError
from expr import CMP_OPS, Const, Expr, Sym, binop, cmp, not_
from target_model.model import (
    NUM_GREGS,
    Block,
    Br,
    Call,
    Effect,
    Function,
    ICall,
    IJmp,
    Jmp,
    LoadEffect,
    Ret,
    Section,
    SetEffect,
    StoreEffect,
    Syscall,
    TargetProgram,
    Terminator,
)
from tracing_config import custom_span

logger = logging.getLogger(__name__)

TOKEN_RE = re.compile(
    r"""
    (?P<COMMENT>\#[^\n]*|//[^\n]*)
  | (?P<WS>\s+)
  | (?P<NUMBER>0[xX][0-9a-fA-F]+|[0-9]+)
  | (?P<IDENT>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<PUNCT>\.\.|<=u|>=u|<u|>u|==|!=|<=|>=|<<|>>|[{}\[\](),;=<>+\-*/&|^~])
  | (?P<MISMATCH>.)
    """,
    re.VERBOSE,
)
REG_RE = re.compile(r"g([0-9]+)$")
DEFAULT_FUNCTION = "main"

# Binary operator precedence, loosest first
PRECEDENCE = [("|",), ("^",), ("&",), ("<<", ">>"), ("+", "-"), ("*", "/")]


class _Tokens:
    def __init__(self, text: str):
        self.items: list[tuple[str, str, int]] = []
        line = 1
        for match in TOKEN_RE.finditer(text):
            kind = match.lastgroup or "MISMATCH"
            value = match.group()
            if kind == "MISMATCH":
                raise TirSyntaxError(f"unexpected character {value!r}", line)
            if kind not in ("WS", "COMMENT"):
                self.items.append((kind, value, line))
            line += value.count("\n")
        self.items.append(("EOF", "", line))
        self.pos = 0

    @property
    def current(self) -> tuple[str, str, int]:
        return self.items[self.pos]

    @property
    def line(self) -> int:
        return self.current[2]

    def advance(self) -> tuple[str, str, int]:
        item = self.current
        if item[0] != "EOF":
            self.pos += 1
        return item

    def check(self, text: str) -> bool:
        return self.current[0] in ("PUNCT", "IDENT") and self.current[1] == text

    def match(self, text: str) -> bool:
        if self.check(text):
            self.advance()
            return True
        return False

    def expect(self, text: str) -> None:
        if not self.match(text):
            self.error(f"expected {text!r}")

    def number(self) -> int:
        kind, value, _ = self.current
        if kind != "NUMBER":
            self.error("expected number")
        self.advance()
        return int(value, 0)

    def ident(self, what: str = "identifier") -> str:
        kind, value, _ = self.current
        if kind != "IDENT":
            self.error(f"expected {what}")
        self.advance()
        return value

    def register(self) -> str:
        kind, value, _ = self.current
        match = REG_RE.match(value) if kind == "IDENT" else None
        if not match:
            self.error("expected register g0..g15")
        if int(match.group(1)) >= NUM_GREGS:  # type: ignore[union-attr]
            self.error("register out of range")
        self.advance()
        return value

    def error(self, message: str) -> None:
        found = self.current[1] or "end of input"
        raise TirSyntaxError(f"{message}, found {found!r}", self.line)


class _TirParser:
    def __init__(self, text: str):
        self.tokens = _Tokens(text)
        self.functions: dict[str, list[int]] = {}
        self.blocks: dict[int, Block] = {}
        self.sections: list[Section] = []
        self.memory: dict[int, int] = {}
        self.entry: int | None = None

    def parse(self) -> None:
        t = self.tokens
        while t.current[0] != "EOF":
            if t.match("section"):
                lo = t.number()
                t.expect("..")
                hi = t.number()
                t.expect("flags")
                flags = t.ident("flags").upper()
                if set(flags) - set("RWX") or hi <= lo:
                    raise TirSyntaxError(f"bad section {lo:#x}..{hi:#x} {flags}", t.line)
                self.sections.append(Section(lo, hi, flags))
            elif t.match("byte"):
                addr = t.number()
                t.expect("=")
                self._init(addr, t.number(), 1)
            elif t.match("word"):
                addr = t.number()
                t.expect("=")
                self._init(addr, t.number(), 8)
            elif t.match("entry"):
                self.entry = t.number()
            elif t.match("function"):
                name = t.ident("function name")
                if name in self.functions:
                    raise TirLinkError(f"duplicate function {name!r}")
                self.functions[name] = []
                t.expect("{")
                while not t.match("}"):
                    self._block(name)
            elif t.check("block"):
                self.functions.setdefault(DEFAULT_FUNCTION, [])
                self._block(DEFAULT_FUNCTION)
            else:
                t.error("expected section, byte, word, entry, function or block")

    def _init(self, addr: int, value: int, size: int) -> None:
        for i, byte in enumerate((value & ((1 << (8 * size)) - 1)).to_bytes(size, "little")):
            self.memory[addr + i] = byte

    def _block(self, function: str) -> None:
        t = self.tokens
        t.expect("block")
        block_id = t.number()
        if block_id in self.blocks:
            raise TirLinkError(f"duplicate block id {block_id:#x}")
        t.expect("{")
        effects: list[Effect] = []
        terminator: Terminator | None = None
        while not t.match("}"):
            if terminator is not None:
                t.error("terminator must end the block")
            if t.check("set") or t.check("load") or t.check("store"):
                effects.append(self._effect())
            else:
                terminator = self._terminator()
            if not t.match(";") and not t.check("}"):
                t.error("expected ';'")
        if terminator is None:
            raise TirSyntaxError(f"block {block_id:#x} has no terminator", t.line)
        self.blocks[block_id] = Block(block_id, function, tuple(effects), terminator)
        self.functions[function].append(block_id)

    def _effect(self) -> Effect:
        t = self.tokens
        op = t.ident()
        if op == "set":
            reg = t.register()
            t.expect(",")
            return SetEffect(reg, self._expr())
        if op == "load":
            reg = t.register()
            t.expect(",")
            addr, size = self._memref()
            return LoadEffect(reg, addr, size)
        addr, size = self._memref()
        t.expect(",")
        return StoreEffect(addr, size, self._expr())

    def _memref(self) -> tuple[Expr, int]:
        t = self.tokens
        t.expect("[")
        addr = self._expr()
        t.expect(",")
        size = t.number()
        if size not in (1, 2, 4, 8):
            t.error("access size must be 1, 2, 4 or 8")
        t.expect("]")
        return addr, size

    def _terminator(self) -> Terminator:
        t = self.tokens
        op = t.ident("terminator")
        if op == "jmp":
            return Jmp(t.number())
        if op == "ret":
            return Ret()
        if op == "br":
            t.expect("(")
            left = self._expr()
            kind, cmp_op, _ = t.current
            if kind != "PUNCT" or cmp_op not in CMP_OPS:
                t.error("expected comparison")
            t.advance()
            right = self._expr()
            t.expect(")")
            t.expect(",")
            taken = t.number()
            t.expect(",")
            return Br(cmp(cmp_op, left, right), taken, t.number())
        if op == "call":
            callee = t.ident("callee")
            t.expect(",")
            return Call(callee, t.number())
        if op == "syscall":
            name = t.ident("syscall name")
            t.expect(",")
            return Syscall(name, t.number())
        if op == "ijmp":
            reg = t.register()
            t.expect(",")
            t.expect("[")
            targets = [t.number()]
            while t.match(","):
                targets.append(t.number())
            t.expect("]")
            return IJmp(reg, tuple(targets))
        if op == "icall":
            reg = t.register()
            t.expect(",")
            t.expect("[")
            callees = [t.ident("callee")]
            while t.match(","):
                callees.append(t.ident("callee"))
            t.expect("]")
            t.expect(",")
            return ICall(reg, tuple(callees), t.number())
        raise TirSyntaxError(f"unknown terminator {op!r}", t.line)

    def _expr(self, level: int = 0) -> Expr:
        if level == len(PRECEDENCE):
            return self._unary()
        left = self._expr(level + 1)
        t = self.tokens
        while t.current[0] == "PUNCT" and t.current[1] in PRECEDENCE[level]:
            op = t.advance()[1]
            left = binop(op, left, self._expr(level + 1))
        return left

    def _unary(self) -> Expr:
        t = self.tokens
        if t.match("~"):
            return not_(self._unary())
        if t.match("-"):
            return binop("-", Const(0), self._unary())
        if t.match("("):
            inner = self._expr()
            t.expect(")")
            return inner
        if t.current[0] == "NUMBER":
            return Const(t.number())
        return Sym(t.register())


def _link(parser: _TirParser, digest: str) -> TargetProgram:
    blocks = parser.blocks
    functions = {
        name: Function(name, tuple(ids)) for name, ids in parser.functions.items() if ids
    }
    empty = [name for name, ids in parser.functions.items() if not ids]
    if empty:
        raise TirLinkError(f"function {empty[0]!r} has no blocks")

    def resolve(target: int, source: int) -> None:
        if target not in blocks:
            raise TirLinkError(f"unknown target {target:#x} in block {source:#x}")

    for block in blocks.values():
        term = block.terminator
        if isinstance(term, Jmp):
            resolve(term.target, block.id)
        elif isinstance(term, Br):
            resolve(term.taken, block.id)
            resolve(term.fall, block.id)
        elif isinstance(term, (Call, ICall)):
            resolve(term.ret, block.id)
        elif isinstance(term, Syscall):
            resolve(term.next, block.id)
        elif isinstance(term, IJmp):
            for target in term.targets:
                resolve(target, block.id)
        if isinstance(term, ICall):
            for callee in term.callees:
                if callee not in functions:
                    raise TirLinkError(f"unknown indirect callee {callee!r} in block {block.id:#x}")

    ordered = sorted(parser.sections, key=lambda s: s.lo)
    for prev, cur in zip(ordered, ordered[1:]):
        if cur.lo < prev.hi:
            raise TirLinkError(f"overlapping sections: {prev} and {cur}")
    for addr in parser.memory:
        if not any(s.contains(addr) for s in ordered):
            raise TirLinkError(f"initialized byte {addr:#x} outside every section")
    if parser.entry is not None and parser.entry not in blocks:
        raise TirLinkError(f"unknown entry {parser.entry:#x}")

    return TargetProgram(
        functions=functions,
        blocks=dict(blocks),
        sections=tuple(ordered),
        memory=dict(parser.memory),
        entry=parser.entry,
        digest=digest,
    )


def parse_target(text: str) -> TargetProgram:
    """Parse and link a TIR program.

    Args:
        text: TIR source

    Returns:
        The linked program

    Raises:
        TirSyntaxError: Malformed text
        TirLinkError: Duplicate block ids, unknown targets, overlapping sections
    """
    with custom_span("target.parse") as span:
        parser = _TirParser(text)
        parser.parse()
        program = _link(parser, hashlib.sha256(text.encode("utf-8")).hexdigest())
        span.set_attribute("blocks", len(program.blocks))
        span.set_attribute("functions", len(program.functions))
        logger.debug(
            "Parsed target",
            extra={
                "context": {
                    "blocks": len(program.blocks),
                    "functions": list(program.functions),
                    "digest": program.digest[:12],
                }
            },
        )
        return program
