"""Z3 backend: 64-bit bit-vector encoding of constraint conjunctions."""

import logging
from collections.abc import Sequence

from expr import BinOp, Cell, Cmp, Const, Expr, Load, Not, Sym, subterms
from solvers.base import ConstraintSolver, Decision, Sat, Unknown, Unsat, as_condition
from tracing_config import traced

try:
    import z3

    HAS_Z3 = True
except ImportError:
    HAS_Z3 = False

logger = logging.getLogger(__name__)

WIDTH = 64


def _atom_name(atom: Expr) -> str:
    if isinstance(atom, Sym):
        return atom.name
    if isinstance(atom, Cell):
        return f"cell_{atom.addr:#x}_{atom.size}"
    raise TypeError(f"not an atom: {atom!r}")


class Z3Solver(ConstraintSolver):
    """Solver backed by z3's bit-vector theory (extra ``z3``)."""

    name = "z3"

    def __init__(self) -> None:
        if not HAS_Z3:
            raise ImportError("z3-solver is required for the z3 backend (pip install 'bop-forge[z3]')")
        self._symbols: dict[Expr, "z3.BitVecRef"] = {}

    def _atom(self, atom: Expr) -> "z3.BitVecRef":
        if atom not in self._symbols:
            self._symbols[atom] = z3.BitVec(_atom_name(atom), WIDTH)
        return self._symbols[atom]

    def _bool(self, e: Cmp) -> "z3.BoolRef":
        left, right = self._to_z3(e.left), self._to_z3(e.right)
        op = e.op
        if op == "==":
            return left == right
        if op == "!=":
            return left != right
        if op == "<":
            return left < right
        if op == "<=":
            return left <= right
        if op == ">":
            return left > right
        if op == ">=":
            return left >= right
        if op == "<u":
            return z3.ULT(left, right)
        if op == "<=u":
            return z3.ULE(left, right)
        if op == ">u":
            return z3.UGT(left, right)
        if op == ">=u":
            return z3.UGE(left, right)
        raise ValueError(f"unknown comparison {op!r}")

    def _to_z3(self, e: Expr) -> "z3.BitVecRef":
        if isinstance(e, Const):
            return z3.BitVecVal(e.value, WIDTH)
        if isinstance(e, (Sym, Cell)):
            return self._atom(e)
        if isinstance(e, Not):
            return ~self._to_z3(e.operand)
        if isinstance(e, Cmp):
            return z3.If(self._bool(e), z3.BitVecVal(1, WIDTH), z3.BitVecVal(0, WIDTH))
        if isinstance(e, BinOp):
            a, b = self._to_z3(e.left), self._to_z3(e.right)
            op = e.op
            if op == "+":
                return a + b
            if op == "-":
                return a - b
            if op == "*":
                return a * b
            if op == "/":
                # signed, truncating; division by zero is excluded explicitly
                return a / b
            if op == "&":
                return a & b
            if op == "|":
                return a | b
            if op == "^":
                return a ^ b
            if op == "<<":
                return a << (b & 63)
            if op == ">>":
                return a >> (b & 63)
            raise ValueError(f"unknown operator {op!r}")
        raise TypeError(f"cannot encode {e!r}")

    @traced("solver.decide")
    def decide(self, constraints: Sequence[Expr], timeout_ms: int = 5000) -> Decision:
        solver = z3.Solver()
        solver.set("timeout", timeout_ms)
        self._symbols = {}
        for constraint in constraints:
            condition = as_condition(constraint)
            if any(isinstance(node, Load) for node in subterms(condition)):
                return Unknown("unresolved memory load")
            if isinstance(condition, Const):
                if condition.value == 0:
                    return Unsat()
                continue
            solver.add(self._bool(condition))
            for divisor in (n.right for n in subterms(condition) if isinstance(n, BinOp) and n.op == "/"):
                solver.add(self._to_z3(divisor) != 0)

        result = solver.check()
        if result == z3.sat:
            model = solver.model()
            values = {
                atom: model.eval(symbol, model_completion=True).as_long()
                for atom, symbol in self._symbols.items()
            }
            return Sat(values)
        if result == z3.unsat:
            return Unsat()
        logger.debug("z3 returned unknown", extra={"context": {"reason": solver.reason_unknown()}})
        return Unknown(solver.reason_unknown() or "timeout")
