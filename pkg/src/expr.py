"""64-bit expression trees shared by TIR effects, block summaries and constraints.

All values are unsigned 64-bit integers; signed views are taken only where an
operator asks for them (``/``, ``>>`` and the signed comparisons).
"""

from collections.abc import Callable, Iterator, Mapping
from dataclasses import dataclass

MASK64 = 0xFFFF_FFFF_FFFF_FFFF

BINARY_OPS = ("+", "-", "*", "/", "&", "|", "^", "<<", ">>")
COMMUTATIVE_OPS = frozenset({"+", "*", "&", "|", "^"})
SIGNED_CMPS = ("==", "!=", "<", "<=", ">", ">=")
UNSIGNED_CMPS = ("<u", "<=u", ">u", ">=u")
CMP_OPS = SIGNED_CMPS + UNSIGNED_CMPS

NEGATED_CMP = {
    "==": "!=",
    "!=": "==",
    "<": ">=",
    ">=": "<",
    ">": "<=",
    "<=": ">",
    "<u": ">=u",
    ">=u": "<u",
    ">u": "<=u",
    "<=u": ">u",
}

# Comparison with its operands exchanged: (c OP x) == (x SWAPPED[OP] c)
SWAPPED_CMP = {
    "==": "==",
    "!=": "!=",
    "<": ">",
    ">": "<",
    "<=": ">=",
    ">=": "<=",
    "<u": ">u",
    ">u": "<u",
    "<=u": ">=u",
    ">=u": "<=u",
}


def u64(value: int) -> int:
    """Wrap an integer to its unsigned 64-bit representative."""
    return value & MASK64


def to_signed(value: int) -> int:
    """Interpret a 64-bit pattern as a two's-complement integer."""
    value &= MASK64
    return value - (1 << 64) if value >> 63 else value


def size_mask(size: int) -> int:
    """Mask selecting the low ``size`` bytes."""
    return (1 << (8 * size)) - 1


def apply_op(op: str, left: int, right: int) -> int:
    """Apply a binary operator with 64-bit wrapping semantics.

    Raises:
        ZeroDivisionError: For ``/`` with a zero divisor
        ValueError: For an unknown operator
    """
    a, b = u64(left), u64(right)
    if op == "+":
        return (a + b) & MASK64
    if op == "-":
        return (a - b) & MASK64
    if op == "*":
        return (a * b) & MASK64
    if op == "/":
        sa, sb = to_signed(a), to_signed(b)
        if sb == 0:
            raise ZeroDivisionError("division by zero")
        quotient = abs(sa) // abs(sb)
        return u64(-quotient if (sa < 0) != (sb < 0) else quotient)
    if op == "&":
        return a & b
    if op == "|":
        return a | b
    if op == "^":
        return a ^ b
    if op == "<<":
        return (a << (b & 63)) & MASK64
    if op == ">>":
        return u64(to_signed(a) >> (b & 63))
    raise ValueError(f"unknown operator {op!r}")


def compare(op: str, left: int, right: int) -> bool:
    """Evaluate a comparison; plain operators are signed, ``u``-suffixed ones unsigned."""
    if op.endswith("u"):
        a, b = u64(left), u64(right)
        op = op[:-1]
    else:
        a, b = to_signed(left), to_signed(right)
    if op == "==":
        return a == b
    if op == "!=":
        return a != b
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    if op == ">=":
        return a >= b
    raise ValueError(f"unknown comparison {op!r}")


class Expr:
    """Base class of expression nodes."""

    __slots__ = ()


@dataclass(frozen=True)
class Const(Expr):
    value: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "value", u64(self.value))

    def __str__(self) -> str:
        return str(self.value) if self.value < 10 else hex(self.value)


@dataclass(frozen=True)
class Sym(Expr):
    """Free symbol: an entry register (``g3``), a stream byte (``stdin[0]``)."""

    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Cell(Expr):
    """Entry-state contents of ``size`` bytes of memory at a concrete address."""

    addr: int
    size: int

    def __str__(self) -> str:
        return f"mem[{self.addr:#x}:{self.size}]"


@dataclass(frozen=True)
class Load(Expr):
    """Load from a symbolic address; ``epoch`` counts the block's earlier stores."""

    addr: Expr
    size: int
    epoch: int = 0

    def __str__(self) -> str:
        suffix = f"@{self.epoch}" if self.epoch else ""
        return f"[{self.addr}:{self.size}]{suffix}"


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    def __str__(self) -> str:
        return f"({self.left} {self.op} {self.right})"


@dataclass(frozen=True)
class Not(Expr):
    operand: Expr

    def __str__(self) -> str:
        return f"~{self.operand}"


@dataclass(frozen=True)
class Cmp(Expr):
    """Comparison; evaluates to 1 or 0."""

    op: str
    left: Expr
    right: Expr

    def __str__(self) -> str:
        return f"{self.left} {self.op} {self.right}"


Atom = Sym | Cell


def const(value: int) -> Const:
    return Const(value)


def binop(op: str, left: Expr, right: Expr) -> Expr:
    """Build a binary node, folding constants and neutral elements only."""
    if isinstance(left, Const) and isinstance(right, Const):
        try:
            return Const(apply_op(op, left.value, right.value))
        except ZeroDivisionError:
            return BinOp(op, left, right)
    if isinstance(right, Const):
        r = right.value
        if r == 0 and op in ("+", "-", "|", "^", "<<", ">>"):
            return left
        if r == 1 and op in ("*", "/"):
            return left
        if r == 0 and op in ("*", "&"):
            return Const(0)
        if r == MASK64 and op == "&":
            return left
    if isinstance(left, Const):
        lv = left.value
        if lv == 0 and op in ("+", "|", "^"):
            return right
        if lv == 1 and op == "*":
            return right
        if lv == 0 and op in ("*", "&", "<<", ">>"):
            return Const(0)
    return BinOp(op, left, right)


def not_(operand: Expr) -> Expr:
    if isinstance(operand, Const):
        return Const(~operand.value)
    if isinstance(operand, Not):
        return operand.operand
    return Not(operand)


def cmp(op: str, left: Expr, right: Expr) -> Expr:
    """Build a comparison, folding it when both sides are constant."""
    if isinstance(left, Const) and isinstance(right, Const):
        return Const(int(compare(op, left.value, right.value)))
    return Cmp(op, left, right)


def negate(condition: Expr) -> Expr:
    """Logical negation of a comparison (or of a 0/1 constant)."""
    if isinstance(condition, Cmp):
        return Cmp(NEGATED_CMP[condition.op], condition.left, condition.right)
    if isinstance(condition, Const):
        return Const(int(condition.value == 0))
    return Cmp("==", condition, Const(0))


def mask_to(value: Expr, size: int) -> Expr:
    """Truncate to ``size`` bytes."""
    if size >= 8:
        return value
    return binop("&", value, Const(size_mask(size)))


LoadFn = Callable[[int, int, int], int]


def evaluate(e: Expr, valuation: Mapping[Expr, int], load: LoadFn | None = None) -> int:
    """Evaluate an expression to a 64-bit value.

    Args:
        e: Expression to evaluate
        valuation: Values of the free atoms (``Sym`` and ``Cell`` nodes)
        load: Callback ``(addr, size, epoch) -> value`` used for ``Load`` nodes

    Raises:
        KeyError: If an atom has no value
        ZeroDivisionError: If a division by zero is evaluated
    """
    if isinstance(e, Const):
        return e.value
    if isinstance(e, (Sym, Cell)):
        return u64(valuation[e])
    if isinstance(e, BinOp):
        return apply_op(e.op, evaluate(e.left, valuation, load), evaluate(e.right, valuation, load))
    if isinstance(e, Not):
        return u64(~evaluate(e.operand, valuation, load))
    if isinstance(e, Cmp):
        return int(
            compare(e.op, evaluate(e.left, valuation, load), evaluate(e.right, valuation, load))
        )
    if isinstance(e, Load):
        if load is None:
            raise KeyError(f"no memory to evaluate {e}")
        return u64(load(evaluate(e.addr, valuation, load), e.size, e.epoch)) & size_mask(e.size)
    raise TypeError(f"not an expression: {e!r}")


def atoms(e: Expr) -> set[Expr]:
    """Free atoms (``Sym``/``Cell``) of an expression."""
    found: set[Expr] = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, (Sym, Cell)):
            found.add(node)
        elif isinstance(node, (BinOp, Cmp)):
            stack.append(node.left)
            stack.append(node.right)
        elif isinstance(node, Not):
            stack.append(node.operand)
        elif isinstance(node, Load):
            stack.append(node.addr)
    return found


def substitute(e: Expr, mapping: Mapping[Expr, Expr]) -> Expr:
    """Replace atoms (or any subtree) according to ``mapping`` and re-fold."""
    if not mapping:
        return e
    if e in mapping:
        return mapping[e]
    if isinstance(e, BinOp):
        return binop(e.op, substitute(e.left, mapping), substitute(e.right, mapping))
    if isinstance(e, Cmp):
        return cmp(e.op, substitute(e.left, mapping), substitute(e.right, mapping))
    if isinstance(e, Not):
        return not_(substitute(e.operand, mapping))
    if isinstance(e, Load):
        return Load(substitute(e.addr, mapping), e.size, e.epoch)
    return e


def linear_form(e: Expr) -> tuple[Expr, int] | None:
    """Split ``atom``, ``atom + c``, ``c + atom`` or ``atom - c`` into (atom, offset)."""
    if isinstance(e, (Sym, Cell)):
        return e, 0
    if isinstance(e, BinOp) and e.op in ("+", "-"):
        if isinstance(e.left, (Sym, Cell)) and isinstance(e.right, Const):
            offset = e.right.value if e.op == "+" else -e.right.value
            return e.left, to_signed(offset)
        if e.op == "+" and isinstance(e.left, Const) and isinstance(e.right, (Sym, Cell)):
            return e.right, to_signed(e.left.value)
    return None


def constants(e: Expr) -> set[int]:
    """Constants occurring in an expression (seeds for witness search)."""
    found: set[int] = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, Const):
            found.add(node.value)
        elif isinstance(node, (BinOp, Cmp)):
            stack.append(node.left)
            stack.append(node.right)
        elif isinstance(node, Not):
            stack.append(node.operand)
        elif isinstance(node, Load):
            stack.append(node.addr)
    return found


def subterms(e: Expr) -> Iterator[Expr]:
    """Every node of an expression, the root first."""
    stack = [e]
    while stack:
        node = stack.pop()
        yield node
        if isinstance(node, (BinOp, Cmp)):
            stack.append(node.right)
            stack.append(node.left)
        elif isinstance(node, Not):
            stack.append(node.operand)
        elif isinstance(node, Load):
            stack.append(node.addr)
