"""Lexer and recursive-descent parser for SPL payloads."""

import logging
import re
from dataclasses import dataclass

from errors import SplSemanticError, SplSyntaxError
from expr import u64
from spl_frontend.ast import (
    NUM_VREGS,
    REGMOD_OPS,
    SPL_CMPS,
    AddrOf,
    Rvalue,
    SplProgram,
    Statement,
    StmtKind,
    VarDecl,
)
from tracing_config import custom_span

logger = logging.getLogger(__name__)

TOKEN_SPEC = [
    ("COMMENT", r"//[^\n]*|/\*.*?\*/"),
    ("WS", r"[ \t\r\n]+"),
    ("STRING", r'"(?:[^"\\\n]|\\.)*"'),
    ("NUMBER", r"0[xX][0-9a-fA-F]+|[0-9]+"),
    ("IDENT", r"[A-Za-z_][A-Za-z_0-9]*"),
    ("PUNCT", r"<<=|>>=|[-+*/&|~]=|==|!=|>=|<=|<<|>>|[{}();,=*&<>:+\-]"),
    ("MISMATCH", r"."),
]
MASTER_RE = re.compile("|".join(f"(?P<{name}>{rx})" for name, rx in TOKEN_SPEC), re.DOTALL)
REGISTER_RE = re.compile(r"__r([0-9]+)$")
ESCAPES = {"0": 0, "n": 10, "t": 9, "r": 13, "\\": 92, '"': 34}


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(source: str, filename: str = "<spl>") -> list[Token]:
    """Split SPL source into tokens, dropping whitespace and comments.

    Raises:
        SplSyntaxError: On a character that starts no token
    """
    tokens: list[Token] = []
    line, line_start = 1, 0
    for match in MASTER_RE.finditer(source):
        kind = match.lastgroup or "MISMATCH"
        text = match.group()
        col = match.start() - line_start + 1
        if kind == "MISMATCH":
            raise SplSyntaxError(f"unexpected character {text!r}", line, col, filename)
        if kind not in ("WS", "COMMENT"):
            tokens.append(Token(kind, text, line, col))
        newlines = text.count("\n")
        if newlines:
            line += newlines
            line_start = match.start() + text.rfind("\n") + 1
    tokens.append(Token("EOF", "", line, len(source) - line_start + 1))
    return tokens


class _TokenStream:
    def __init__(self, tokens: list[Token], filename: str):
        self.tokens = tokens
        self.pos = 0
        self.filename = filename

    @property
    def current(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, offset: int = 1) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def advance(self) -> Token:
        token = self.current
        if token.kind != "EOF":
            self.pos += 1
        return token

    def check(self, text: str) -> bool:
        return self.current.kind in ("PUNCT", "IDENT") and self.current.text == text

    def match(self, text: str) -> bool:
        if self.check(text):
            self.advance()
            return True
        return False

    def expect(self, text: str) -> Token:
        if not self.check(text):
            self.error(f"expected {text!r}")
        return self.advance()

    def expect_kind(self, kind: str, what: str) -> Token:
        if self.current.kind != kind:
            self.error(f"expected {what}")
        return self.advance()

    def error(self, message: str, token: Token | None = None) -> None:
        token = token or self.current
        found = token.text or "end of input"
        raise SplSyntaxError(f"{message}, found {found!r}", token.line, token.col, self.filename)


def _register(stream: _TokenStream) -> int:
    token = stream.current
    match = REGISTER_RE.match(token.text) if token.kind == "IDENT" else None
    if not match:
        stream.error("expected virtual register")
    reg = int(match.group(1))  # type: ignore[union-attr]
    if reg >= NUM_VREGS:
        raise SplSemanticError(
            f"register id out of range: {token.text}", token.line, token.col, stream.filename
        )
    stream.advance()
    return reg


def _is_register(token: Token) -> bool:
    return token.kind == "IDENT" and REGISTER_RE.match(token.text) is not None


def _number(stream: _TokenStream) -> int:
    negative = False
    if stream.check("-") or stream.check("+"):
        negative = stream.advance().text == "-"
    token = stream.expect_kind("NUMBER", "number")
    value = int(token.text, 0)
    return u64(-value if negative else value)


def _rvalue(stream: _TokenStream, refs: list[tuple[str, Token]]) -> Rvalue:
    if stream.match("&"):
        token = stream.expect_kind("IDENT", "variable name")
        refs.append((token.text, token))
        return AddrOf(token.text)
    return _number(stream)


def _string(stream: _TokenStream) -> bytes:
    token = stream.expect_kind("STRING", "string literal")
    body = token.text[1:-1]
    out = bytearray()
    i = 0
    while i < len(body):
        ch = body[i]
        if ch != "\\":
            out.extend(ch.encode("utf-8"))
            i += 1
            continue
        esc = body[i + 1]
        if esc in ESCAPES:
            out.append(ESCAPES[esc])
            i += 2
        elif esc == "x" and re.match(r"[0-9a-fA-F]{2}", body[i + 2 : i + 4]):
            out.append(int(body[i + 2 : i + 4], 16))
            i += 4
        else:
            raise SplSyntaxError(
                f"unknown escape \\{esc}", token.line, token.col + i + 1, stream.filename
            )
    if not out.endswith(b"\0"):
        out.append(0)
    return bytes(out)


class _Parser:
    def __init__(self, source: str, filename: str):
        self.filename = filename
        self.stream = _TokenStream(tokenize(source, filename), filename)
        self.statements: list[Statement] = []
        self.labels: dict[str, int] = {}
        self.label_tokens: dict[str, Token] = {}
        self.variables: dict[str, VarDecl] = {}
        self.var_tokens: dict[str, Token] = {}
        self.goto_refs: list[tuple[str, Token]] = []
        self.var_refs: list[tuple[str, Token]] = []

    def semantic_error(self, message: str, token: Token) -> SplSemanticError:
        return SplSemanticError(message, token.line, token.col, self.filename)

    def parse(self) -> SplProgram:
        s = self.stream
        s.expect("void")
        s.expect("payload")
        s.expect("(")
        s.expect(")")
        s.expect("{")
        while not s.check("}"):
            if s.current.kind == "EOF":
                s.error("expected '}'")
            if s.check("returnto"):
                self._returnto()
                if not s.check("}"):
                    raise self.semantic_error(
                        "returnto must be the last statement", s.current
                    )
                continue
            self._statement()
        s.expect("}")
        if s.current.kind != "EOF":
            s.error("unexpected text after payload")
        self._validate()
        return SplProgram(tuple(self.statements), dict(self.labels), dict(self.variables))

    def _emit(self, token: Token, **fields) -> None:
        self.statements.append(Statement(line=token.line, col=token.col, **fields))

    def _returnto(self) -> None:
        token = self.stream.expect("returnto")
        value = _number(self.stream)
        self.stream.expect(";")
        self._emit(token, kind=StmtKind.RETURNTO, value=value)

    def _statement(self) -> None:
        s = self.stream
        token = s.current
        if token.kind == "IDENT" and token.text in ("int64", "string"):
            self._varset()
        elif s.check("if"):
            self._cond()
        elif s.check("goto"):
            s.advance()
            target = s.expect_kind("IDENT", "label name")
            s.expect(";")
            self.goto_refs.append((target.text, target))
            self._emit(token, kind=StmtKind.JUMP, label=target.text)
        elif s.check("*"):
            s.advance()
            dst = _register(s)
            s.expect("=")
            src = _register(s)
            s.expect(";")
            self._emit(token, kind=StmtKind.MEMWR, reg=dst, src=src)
        elif _is_register(token):
            self._register_statement()
        elif token.kind == "IDENT" and s.peek().text == ":":
            s.advance()
            s.advance()
            self._label(token)
        elif token.kind == "IDENT" and s.peek().text == "(":
            self._call()
        else:
            s.error("expected statement")

    def _label(self, token: Token) -> None:
        name = token.text
        if name in self.labels:
            raise self.semantic_error(f"duplicate label {name!r}", token)
        self.labels[name] = len(self.statements)
        self.label_tokens[name] = token

    def _varset(self) -> None:
        s = self.stream
        type_token = s.advance()
        if type_token.text == "string":
            name = s.expect_kind("IDENT", "variable name")
            s.expect("=")
            decl = VarDecl(name.text, "string", _string(s))
        elif s.match("*"):
            name = s.expect_kind("IDENT", "variable name")
            s.expect("=")
            s.expect("{")
            items = [_rvalue(s, self.var_refs)]
            while s.match(","):
                items.append(_rvalue(s, self.var_refs))
            s.expect("}")
            decl = VarDecl(name.text, "array", tuple(items))
        else:
            name = s.expect_kind("IDENT", "variable name")
            s.expect("=")
            decl = VarDecl(name.text, "int64", _rvalue(s, self.var_refs))
        s.expect(";")
        if decl.name in self.variables:
            raise self.semantic_error(f"duplicate variable {decl.name!r}", name)
        if REGISTER_RE.match(decl.name):
            raise self.semantic_error(f"variable name {decl.name!r} is a register", name)
        self.variables[decl.name] = decl
        self.var_tokens[decl.name] = name
        self._emit(type_token, kind=StmtKind.VARSET, var=decl.name)

    def _cond(self) -> None:
        s = self.stream
        token = s.expect("if")
        s.expect("(")
        reg = _register(s)
        op_token = s.current
        if op_token.kind != "PUNCT" or op_token.text not in SPL_CMPS:
            s.error("expected comparison operator")
        s.advance()
        value = _number(s)
        s.expect(")")
        s.expect("goto")
        target = s.expect_kind("IDENT", "label name")
        s.expect(";")
        self.goto_refs.append((target.text, target))
        self._emit(
            token, kind=StmtKind.COND, reg=reg, op=op_token.text, value=value, label=target.text
        )

    def _register_statement(self) -> None:
        s = self.stream
        token = s.current
        reg = _register(s)
        if s.match("="):
            if s.match("*"):
                src = _register(s)
                s.expect(";")
                self._emit(token, kind=StmtKind.MEMRD, reg=reg, src=src)
                return
            value = _rvalue(s, self.var_refs)
            s.expect(";")
            self._emit(token, kind=StmtKind.REGSET, reg=reg, value=value)
            return
        op_token = s.current
        if op_token.kind != "PUNCT" or not op_token.text.endswith("=") or op_token.text[:-1] not in REGMOD_OPS:
            s.error("expected '=' or a compound assignment")
        s.advance()
        value = _number(s)
        s.expect(";")
        self._emit(token, kind=StmtKind.REGMOD, reg=reg, op=op_token.text[:-1], value=value)

    def _call(self) -> None:
        s = self.stream
        name = s.advance()
        s.expect("(")
        args: list[int] = []
        if not s.check(")"):
            args.append(_register(s))
            while s.match(","):
                args.append(_register(s))
        s.expect(")")
        s.expect(";")
        self._emit(name, kind=StmtKind.CALL, name=name.text, args=tuple(args))

    def _validate(self) -> None:
        for name, token in self.goto_refs:
            if name not in self.labels:
                raise self.semantic_error(f"undeclared label {name!r}", token)
        for name, token in self.var_refs:
            if name not in self.variables:
                raise self.semantic_error(f"undeclared variable {name!r}", token)
        for name, token in self.label_tokens.items():
            if name in self.variables:
                raise self.semantic_error(f"label {name!r} shadows a variable", token)


def parse_spl(source: str, filename: str = "<spl>") -> SplProgram:
    """Parse and validate an SPL payload.

    Args:
        source: SPL text
        filename: Name used in diagnostics

    Returns:
        The validated program

    Raises:
        SplSyntaxError: Malformed input (``file:line:col`` aware)
        SplSemanticError: Undeclared or duplicate labels, register ids out of range
    """
    with custom_span("spl.parse", {"filename": filename}) as span:
        program = _Parser(source, filename).parse()
        span.set_attribute("statements", len(program.statements))
        logger.debug(
            "Parsed SPL payload",
            extra={
                "context": {
                    "filename": filename,
                    "statements": len(program.statements),
                    "labels": sorted(program.labels),
                }
            },
        )
        return program
