"""Built-in decision procedure.

Folding, then equality propagation, then signed/unsigned interval refinement
per atom, then a bounded witness search over the remaining free atoms.
"""

import logging
import random
import time
from collections.abc import Sequence
from dataclasses import dataclass, field

from expr import (
    MASK64,
    SWAPPED_CMP,
    Cell,
    Cmp,
    Const,
    Expr,
    Load,
    Sym,
    atoms,
    constants,
    linear_form,
    substitute,
    subterms,
    to_signed,
    u64,
)
from solvers.base import ConstraintSolver, Decision, Sat, Unknown, Unsat, as_condition, holds
from tracing_config import traced

logger = logging.getLogger(__name__)

SIGNED_MIN = -(1 << 63)
SIGNED_MAX = (1 << 63) - 1

# Domains at most this wide are enumerated completely
EXHAUSTIVE_WIDTH = 64

# Distance from an equality point still tried for a related atom
RELATED_REACH = 3


@dataclass
class _Interval:
    slo: int = SIGNED_MIN
    shi: int = SIGNED_MAX
    ulo: int = 0
    uhi: int = MASK64
    excluded: set[int] = field(default_factory=set)

    def refine(self, op: str, c: int) -> None:
        s = to_signed(c)
        if op == "<":
            self.shi = min(self.shi, s - 1)
        elif op == "<=":
            self.shi = min(self.shi, s)
        elif op == ">":
            self.slo = max(self.slo, s + 1)
        elif op == ">=":
            self.slo = max(self.slo, s)
        elif op == "<u":
            self.uhi = min(self.uhi, c - 1)
        elif op == "<=u":
            self.uhi = min(self.uhi, c)
        elif op == ">u":
            self.ulo = max(self.ulo, c + 1)
        elif op == ">=u":
            self.ulo = max(self.ulo, c)
        elif op == "!=":
            self.excluded.add(c)

    def nonnegative(self) -> tuple[int, int] | None:
        """Intersection of both ranges when it lies within [0, SIGNED_MAX]."""
        if self.uhi <= SIGNED_MAX or self.slo >= 0:
            return max(self.slo, self.ulo), min(self.shi, self.uhi)
        return None

    def empty(self) -> bool:
        if self.slo > self.shi or self.ulo > self.uhi:
            return True
        span = self.nonnegative()
        return span is not None and span[0] > span[1]

    def admits(self, value: int) -> bool:
        return (
            self.slo <= to_signed(value) <= self.shi
            and self.ulo <= value <= self.uhi
            and value not in self.excluded
        )

    def finite_values(self) -> list[int] | None:
        """Every admitted value, when the admitted range is narrow."""
        span = self.nonnegative()
        if span is not None and span[1] - span[0] < EXHAUSTIVE_WIDTH:
            values = iter(range(span[0], span[1] + 1))
        elif self.shi - self.slo < EXHAUSTIVE_WIDTH:
            values = (u64(v) for v in range(self.slo, self.shi + 1))
        elif self.uhi - self.ulo < EXHAUSTIVE_WIDTH:
            values = iter(range(self.ulo, self.uhi + 1))
        else:
            return None
        return [v for v in values if self.admits(v)]

    def bounds(self) -> set[int]:
        points = set()
        for v in (self.slo, self.shi, self.ulo, self.uhi):
            points.update(u64(v + d) for d in (-1, 0, 1))
        return points


def _equality(constraint: Expr) -> tuple[Expr, int] | None:
    if not isinstance(constraint, Cmp) or constraint.op != "==":
        return None
    if isinstance(constraint.right, Const):
        side, value = constraint.left, constraint.right.value
    elif isinstance(constraint.left, Const):
        side, value = constraint.right, constraint.left.value
    else:
        return None
    form = linear_form(side)
    if form is None:
        return None
    atom, offset = form
    return atom, u64(value - offset)


def _atom_bound(constraint: Expr) -> tuple[Expr, str, int] | None:
    if not isinstance(constraint, Cmp):
        return None
    if isinstance(constraint.left, (Sym, Cell)) and isinstance(constraint.right, Const):
        return constraint.left, constraint.op, constraint.right.value
    if isinstance(constraint.right, (Sym, Cell)) and isinstance(constraint.left, Const):
        return constraint.right, SWAPPED_CMP[constraint.op], constraint.left.value
    return None


def _preference(value: int) -> tuple[int, int]:
    return abs(to_signed(value)), value


def _relation(constraint: Expr) -> tuple[Expr, int, Expr, int] | None:
    """Split ``x + a  op  y + b`` over two atoms into (x, a, y, b)."""
    if not isinstance(constraint, Cmp):
        return None
    left, right = linear_form(constraint.left), linear_form(constraint.right)
    if left is None or right is None or left[0] == right[0]:
        return None
    return left[0], left[1], right[0], right[1]


class BuiltinSolver(ConstraintSolver):
    """Dependency-free solver for the constraint shapes TIR blocks produce.

    Unsat is only claimed when folding, propagation or intervals refute the
    conjunction, or when every free atom has a finite domain that was searched
    completely. A search that runs out of candidates otherwise gives Unknown.
    """

    name = "builtin"

    def __init__(self, samples: int = 8, seed: int = 0):
        self.samples = samples
        self.seed = seed

    @traced("solver.decide")
    def decide(self, constraints: Sequence[Expr], timeout_ms: int = 5000) -> Decision:
        deadline = time.monotonic() + timeout_ms / 1000
        if any(isinstance(node, Load) for c in constraints for node in subterms(c)):
            return Unknown("unresolved memory load")

        bound: dict[Expr, int] = {}
        pending = [as_condition(c) for c in constraints]
        changed = True
        while changed:
            changed = False
            rest = []
            for constraint in pending:
                constraint = substitute(constraint, {a: Const(v) for a, v in bound.items()})
                if isinstance(constraint, Const):
                    if constraint.value == 0:
                        return Unsat()
                    continue
                equality = _equality(constraint)
                if equality is not None:
                    atom, value = equality
                    bound[atom] = value
                    changed = True
                    continue
                rest.append(constraint)
            pending = rest

        intervals: dict[Expr, _Interval] = {}
        for constraint in pending:
            for atom in atoms(constraint):
                intervals.setdefault(atom, _Interval())
            shape = _atom_bound(constraint)
            if shape is not None:
                atom, op, c = shape
                intervals[atom].refine(op, c)
        for atom, interval in intervals.items():
            if interval.empty():
                logger.debug("Interval refuted", extra={"context": {"atom": str(atom)}})
                return Unsat()

        if not pending:
            return Sat(dict(bound))

        return self._search(pending, intervals, bound, deadline)

    def _domains(
        self, pending: list[Expr], intervals: dict[Expr, _Interval]
    ) -> tuple[dict[Expr, list[int]], bool]:
        rng = random.Random(self.seed)
        seeds: set[int] = {0, 1, MASK64}
        for constraint in pending:
            for c in constants(constraint):
                seeds.update(u64(c + d) for d in (-1, 0, 1))
            relation = _relation(constraint)
            if relation is not None:
                # bounds of one side shifted onto the other
                x, a, y, b = relation
                seeds.update(u64(v + b - a) for v in intervals[y].bounds())
                seeds.update(u64(v + a - b) for v in intervals[x].bounds())
        for interval in intervals.values():
            seeds |= interval.bounds()
        for _ in range(2):
            seeds |= {u64(v + d) for v in seeds for d in (-1, 1)}

        domains: dict[Expr, list[int]] = {}
        exhaustive = True
        for atom, interval in intervals.items():
            finite = interval.finite_values()
            if finite is not None:
                domains[atom] = sorted(finite, key=_preference)
                continue
            exhaustive = False
            pool = {v for v in seeds if interval.admits(v)}
            span = interval.nonnegative()
            lo, hi = span if span is not None else (interval.slo, interval.shi)
            for _ in range(self.samples):
                value = u64(rng.randint(lo, hi))
                if interval.admits(value):
                    pool.add(value)
            domains[atom] = sorted(pool, key=_preference)
        return domains, exhaustive

    def _search(
        self,
        pending: list[Expr],
        intervals: dict[Expr, _Interval],
        bound: dict[Expr, int],
        deadline: float,
    ) -> Decision:
        domains, exhaustive = self._domains(pending, intervals)
        order = sorted(domains, key=lambda a: (len(domains[a]), str(a)))
        position = {atom: i for i, atom in enumerate(order)}
        checks: list[list[Expr]] = [[] for _ in order]
        for constraint in pending:
            last = max(position[a] for a in atoms(constraint))
            checks[last].append(constraint)

        model: dict[Expr, int] = dict(bound)

        def related(depth: int) -> list[int]:
            """Values near the equality points of relations with assigned atoms."""
            atom = order[depth]
            found: list[int] = []
            for constraint in checks[depth]:
                relation = _relation(constraint)
                if relation is None:
                    continue
                x, a, y, b = relation
                if x == atom and y in model:
                    target = model[y] + b - a
                elif y == atom and x in model:
                    target = model[x] + a - b
                else:
                    continue
                for d in range(-RELATED_REACH, RELATED_REACH + 1):
                    value = u64(target + d)
                    if intervals[atom].admits(value):
                        found.append(value)
            return found

        def assign(depth: int) -> bool | None:
            if depth == len(order):
                return True
            if time.monotonic() > deadline:
                return None
            atom = order[depth]
            candidates = dict.fromkeys(domains[atom])
            candidates.update(dict.fromkeys(related(depth)))
            for value in candidates:
                model[atom] = value
                try:
                    ok = all(holds(c, model) for c in checks[depth])
                except ZeroDivisionError:
                    ok = False
                if ok:
                    result = assign(depth + 1)
                    if result is None or result:
                        return result
            model.pop(atom, None)
            return False

        found = assign(0)
        if found:
            return Sat(model)
        if found is None:
            logger.debug("Solver timed out", extra={"context": {"atoms": len(order)}})
            return Unknown("timeout")
        if exhaustive:
            return Unsat()
        return Unknown("no witness among candidates")
