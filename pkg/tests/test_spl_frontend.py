"""Tests for the SPL parser, statement IR and reference interpreter."""

import random

import pytest

from errors import SplRuntimeError, SplSemanticError, SplSyntaxError
from expr import u64
from spl_frontend import (
    PAYLOAD_NAMES,
    AddrOf,
    StmtKind,
    build_statement_ir,
    enumerate_permutations,
    interpret_spl,
    layout_variables,
    load_payload,
    parse_spl,
    payload_path,
    print_spl,
    reorder,
)
from spl_frontend.ast import NUM_VREGS, REGMOD_OPS, SPL_CMPS, SplProgram, Statement, VarDecl

PAYLOAD_SIZES = {
    "regset4": 4,
    "regref4": 8,
    "regset5": 5,
    "regref5": 10,
    "regmod": 3,
    "memrd": 4,
    "memwr": 5,
    "print": 6,
    "execve": 6,
    "abloop": 2,
    "infloop": 2,
    "ifelse": 7,
    "loop": 4,
    "brainfuck": 56,
}


def brainfuck_oracle(code: bytes, stdin: bytes = b"", cells: int = 16) -> tuple[bytes, list[int]]:
    """Straightforward interpreter with 8-bit cells."""
    tape = [0] * cells
    out = bytearray()
    ptr = pc = pos = 0
    while pc < len(code):
        op = chr(code[pc])
        if op == ">":
            ptr += 1
        elif op == "<":
            ptr -= 1
        elif op == "+":
            tape[ptr] = (tape[ptr] + 1) & 0xFF
        elif op == "-":
            tape[ptr] = (tape[ptr] - 1) & 0xFF
        elif op == ".":
            out.append(tape[ptr])
        elif op == ",":
            if pos < len(stdin):
                tape[ptr] = stdin[pos]
                pos += 1
        elif op == "[" and tape[ptr] == 0:
            depth = 1
            while depth:
                pc += 1
                depth += {ord("["): 1, ord("]"): -1}.get(code[pc], 0)
        elif op == "]" and tape[ptr] != 0:
            depth = 1
            while depth:
                pc -= 1
                depth += {ord("]"): 1, ord("["): -1}.get(code[pc], 0)
        pc += 1
    return bytes(out), tape


def brainfuck_program(code: str):
    source = payload_path("brainfuck").read_text(encoding="utf-8")
    return parse_spl(source.replace('".+[.+]"', f'"{code}"'))


class TestParser:
    """Test cases for parse_spl."""

    @pytest.mark.parametrize("name,size", sorted(PAYLOAD_SIZES.items()))
    def test_bundled_payload_sizes(self, name, size):
        """Bundled payloads parse to their known statement counts."""
        assert len(load_payload(name).statements) == size

    def test_every_bundled_payload_listed(self):
        """The size table covers every bundled payload."""
        assert set(PAYLOAD_NAMES) == set(PAYLOAD_SIZES)

    def test_unknown_payload(self):
        """Unknown payload names raise ValueError."""
        with pytest.raises(ValueError, match="Unknown payload"):
            payload_path("rop")

    def test_statement_kinds(self, spl):
        """Each statement form maps to its kind."""
        program = spl(
            """
            int64 x = 5;
            __r0 = &x;
            __r1 = *__r0;
            __r1 += 2;
            *__r0 = __r1;
            write(__r0, __r1, __r1);
            L:
            if (__r1 != 7) goto L;
            goto L;
            returnto 0x400000;
            """
        )
        kinds = [s.kind for s in program.statements]
        assert kinds == [
            StmtKind.VARSET,
            StmtKind.REGSET,
            StmtKind.MEMRD,
            StmtKind.REGMOD,
            StmtKind.MEMWR,
            StmtKind.CALL,
            StmtKind.COND,
            StmtKind.JUMP,
            StmtKind.RETURNTO,
        ]
        assert program.statements[1].value == AddrOf("x")
        assert program.labels == {"L": 6}

    def test_string_terminated(self, spl):
        """String variables get a trailing NUL."""
        program = spl('string s = "ab";')
        assert program.variables["s"].value == b"ab\0"

    def test_negative_numbers_wrap(self, spl):
        """Negative literals are two's complement."""
        program = spl("__r0 = -1;")
        assert program.statements[0].value == 0xFFFFFFFFFFFFFFFF

    def test_syntax_error_location(self):
        """Syntax errors render as file:line:col."""
        with pytest.raises(SplSyntaxError) as exc_info:
            parse_spl("void payload() {\n  __r0 = ;\n}\n", filename="bad.spl")
        assert exc_info.value.render().startswith("bad.spl:2:10:")

    @pytest.mark.parametrize(
        "body",
        [
            "goto NOWHERE;",
            "__r8 = 1;",
            "__r0 = &missing;",
            "L:\nL:\n__r0 = 1;",
            "int64 a = 1;\nint64 a = 2;",
            "returnto 0x1;\n__r0 = 1;",
        ],
    )
    def test_semantic_errors(self, spl, body):
        """Undeclared names, duplicates and misplaced returnto are rejected."""
        with pytest.raises(SplSemanticError):
            spl(body)

    def test_printer_reparses(self):
        """Printed programs parse back to the same program."""
        program = load_payload("brainfuck")
        assert parse_spl(print_spl(program)) == program

    def test_brainfuck_labels(self):
        """The Brainfuck payload dispatches through one label per instruction check."""
        program = load_payload("brainfuck")
        assert set(program.labels) == {
            "NEXT", "LESS", "PLUS", "MINUS", "DOT", "COMMA", "OPEN",
            "FIND_C", "CHECK_C", "CLOSE", "FIND_O", "CHECK_O", "END", "HALT",
        }
        assert program.labels["HALT"] == len(program.statements)
        assert program.labels["NEXT"] == 7


STRING_BYTES = (0x00, 0x09, 0x0A, 0x22, 0x41, 0x5C, 0x7E, 0x7F, 0x80, 0xC3, 0xE9, 0xFF)
NUMBERS = (0, 1, 7, 255, 256, 0x41, -1, -300, 1 << 63, (1 << 63) - 1, (1 << 64) - 2)
CALL_NAMES = ("execve", "write", "read", "exit", "mprotect", "getpid")


def random_number(rng: random.Random) -> int:
    choice = rng.randrange(3)
    if choice == 0:
        return u64(rng.choice(NUMBERS))
    if choice == 1:
        return rng.getrandbits(64)
    return u64(-rng.randrange(1, 1 << 20))


def random_program(rng: random.Random) -> SplProgram:
    """A well-formed program drawn from the whole statement grammar."""
    names = [f"v{i}" for i in range(rng.randint(0, 3))]
    labels = [f"L{i}" for i in range(rng.randint(1, 3))]

    def rvalue():
        if names and rng.random() < 0.3:
            return AddrOf(rng.choice(names))
        return random_number(rng)

    def reg():
        return rng.randrange(NUM_VREGS)

    variables = {}
    for name in names:
        kind = rng.choice(("int64", "array", "string"))
        if kind == "string":
            value = bytes(rng.choice(STRING_BYTES) for _ in range(rng.randint(0, 8))) + b"\0"
        elif kind == "array":
            value = tuple(rvalue() for _ in range(rng.randint(1, 4)))
        else:
            value = rvalue()
        variables[name] = VarDecl(name, kind, value)

    body = []
    for _ in range(rng.randint(0, 12)):
        kind = rng.choice([k for k in StmtKind if k not in (StmtKind.VARSET, StmtKind.RETURNTO)])
        if kind == StmtKind.REGSET:
            body.append(Statement(kind, reg=reg(), value=rvalue()))
        elif kind == StmtKind.REGMOD:
            body.append(Statement(kind, reg=reg(), op=rng.choice(REGMOD_OPS), value=random_number(rng)))
        elif kind in (StmtKind.MEMRD, StmtKind.MEMWR):
            body.append(Statement(kind, reg=reg(), src=reg()))
        elif kind == StmtKind.CALL:
            args = tuple(reg() for _ in range(rng.randint(0, 6)))
            body.append(Statement(kind, name=rng.choice(CALL_NAMES), args=args))
        elif kind == StmtKind.COND:
            body.append(
                Statement(kind, reg=reg(), op=rng.choice(SPL_CMPS), value=random_number(rng), label=rng.choice(labels))
            )
        else:
            body.append(Statement(kind, label=rng.choice(labels)))
    for name in names:
        body.insert(rng.randint(0, len(body)), Statement(StmtKind.VARSET, var=name))

    ends_with_returnto = rng.random() < 0.3
    if ends_with_returnto:
        body.append(Statement(StmtKind.RETURNTO, value=random_number(rng)))
    # nothing may follow returnto, labels included
    last = len(body) - 1 if ends_with_returnto else len(body)
    positions = {label: rng.randint(0, last) for label in labels}
    return SplProgram(tuple(body), positions, variables)


class TestRoundTrip:
    """Test cases for printing random programs and parsing them back."""

    def test_generator_covers_grammar(self):
        """The generator reaches every statement kind and both label ends."""
        kinds, end_labels = set(), 0
        for seed in range(300):
            program = random_program(random.Random(seed))
            kinds |= {s.kind for s in program.statements}
            end_labels += bool(program.label_at(len(program.statements)))
        assert kinds == set(StmtKind)
        assert end_labels > 0

    def test_print_parse(self):
        """parse(print(p)) == p over many generated programs."""
        for seed in range(300):
            program = random_program(random.Random(seed))
            source = print_spl(program)
            assert parse_spl(source) == program, (seed, source)


class TestStatementIR:
    """Test cases for dependence groups and orderings."""

    def test_independent_statements_share_a_group(self):
        """Independent register sets form a single group."""
        ir = build_statement_ir(load_payload("regset4"))
        assert ir.groups == ((0, 1, 2, 3),)

    def test_permutations_bounded(self):
        """At most P orderings are produced, source order first."""
        ir = build_statement_ir(load_payload("regset4"))
        orders = list(enumerate_permutations(ir, 32))
        assert len(orders) == 24
        assert orders[0] == (0, 1, 2, 3)
        assert len(set(orders)) == 24
        assert len(list(enumerate_permutations(ir, 5))) == 5

    def test_permutation_bound_validated(self):
        """A bound below one raises ValueError."""
        ir = build_statement_ir(load_payload("regset4"))
        with pytest.raises(ValueError):
            list(enumerate_permutations(ir, 0))

    def test_dependencies_respected(self):
        """A store stays after the sets it reads."""
        ir = build_statement_ir(load_payload("memwr"))
        for order in enumerate_permutations(ir, 32):
            position = {stmt: i for i, stmt in enumerate(order)}
            assert position[1] < position[3]
            assert position[2] < position[3]
            assert position[3] < position[4]

    def test_control_statements_stand_alone(self):
        """Conditional and jump statements never move."""
        ir = build_statement_ir(load_payload("ifelse"))
        assert (2,) in ir.groups
        assert (4,) in ir.groups

    def test_adjacency_edges(self):
        """The adjacency graph has taken and fall edges for conditions."""
        ir = build_statement_ir(load_payload("ifelse"))
        assert ir.adjacency.has_edge(2, 5, key="taken")
        assert ir.adjacency.has_edge(2, 3, key="fall")
        assert ir.adjacency.has_edge(6, ir.exit_node)

    def test_reordered_payload_equivalent(self):
        """Every ordering computes the same registers."""
        program = load_payload("regref4")
        expected = interpret_spl(program)
        ir = build_statement_ir(program)
        for order in enumerate_permutations(ir, 32):
            result = interpret_spl(reorder(program, order))
            assert result.registers == expected.registers


class TestInterpreter:
    """Test cases for interpret_spl."""

    def test_variable_layout(self):
        """Variables are placed consecutively, 8-byte aligned."""
        program = load_payload("execve")
        layout = layout_variables(program, base=0x1000)
        assert layout == {"prog": 0x1000, "argv": 0x1008}

    def test_execve_event(self):
        """Calls are recorded with their arguments."""
        program = load_payload("execve")
        layout = layout_variables(program)
        result = interpret_spl(program)
        assert result.events[0].name == "execve"
        assert result.events[0].args == (layout["prog"], layout["argv"], 0)

    def test_print_writes_stdout(self):
        """write on fd 1 goes to stdout."""
        assert interpret_spl(load_payload("print")).stdout == b"Hello BOP\n"

    def test_loop_counts(self):
        """The bounded loop runs 128 times."""
        result = interpret_spl(load_payload("loop"))
        assert result.registers[0] == 128
        assert result.visits[1] == 128
        assert str(result.exit) == "returnto(0x446730)"

    def test_infinite_loop_exhausts_fuel(self):
        """Fuel bounds infinite loops."""
        result = interpret_spl(load_payload("infloop"), fuel=100)
        assert result.exit.kind == "fuel-exhausted"

    def test_overrides_on_first_visit(self):
        """Overrides apply once, before the statement runs."""
        program = load_payload("ifelse")
        result = interpret_spl(program, overrides={2: {0: 1}})
        assert result.registers[1] == 0

    def test_memwr_roundtrip(self):
        """A stored register reads back."""
        result = interpret_spl(load_payload("memwr"))
        assert result.registers[2] == 0x41
        assert result.memory["slot"] == (0x41).to_bytes(8, "little")

    def test_bad_dereference(self, spl):
        """Dereferencing outside variables raises."""
        with pytest.raises(SplRuntimeError):
            interpret_spl(spl("__r0 = 0x10;\n__r1 = *__r0;"))

    def test_division_by_zero(self, spl):
        """Division by zero raises."""
        with pytest.raises(SplRuntimeError):
            interpret_spl(spl("__r0 /= 0;"))

    def test_xor_operator(self, spl):
        """Binary ~ is exclusive or."""
        result = interpret_spl(spl("__r0 = 0xF0;\n__r0 ~= 0xFF;"))
        assert result.registers[0] == 0x0F

    @pytest.mark.parametrize(
        "code,stdin",
        [
            (".+[.+]", b""),
            ("++>+++[<+>-]<.", b""),
            (",[.,]", b"bop\0"),
            ("+++[>++[>+<-]<-]>>.", b""),
        ],
    )
    def test_brainfuck_matches_oracle(self, code, stdin):
        """The Brainfuck payload agrees with a direct interpreter."""
        expected_out, expected_tape = brainfuck_oracle(code.encode(), stdin)
        result = interpret_spl(brainfuck_program(code), stdin=stdin, fuel=100_000)
        assert result.exit.kind == "end"
        assert result.stdout == expected_out
        tape = result.memory["tape"]
        cells = [int.from_bytes(tape[i : i + 8], "little") for i in range(0, len(tape), 8)]
        assert cells == expected_tape
