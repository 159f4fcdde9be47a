"""Abstract base class for constraint decision procedures."""

from abc import ABC, abstractmethod
from collections.abc import Sequence
from dataclasses import dataclass, field

from expr import Cmp, Const, Expr, evaluate


@dataclass(frozen=True)
class Sat:
    """Satisfiable, with values for every atom of the conjunction."""

    model: dict[Expr, int] = field(default_factory=dict)


@dataclass(frozen=True)
class Unsat:
    pass


@dataclass(frozen=True)
class Unknown:
    reason: str = "timeout"


Decision = Sat | Unsat | Unknown


def holds(constraint: Expr, model: dict[Expr, int]) -> bool:
    """Whether a constraint evaluates to true (non-zero) under ``model``."""
    return evaluate(constraint, model) != 0


def as_condition(constraint: Expr) -> Expr:
    """Normalize a plain value constraint ``e`` to ``e != 0``."""
    if isinstance(constraint, (Cmp, Const)):
        return constraint
    return Cmp("!=", constraint, Const(0))


class ConstraintSolver(ABC):
    """Abstract decision procedure over conjunctions of 64-bit constraints.

    A constraint is an expression that must evaluate to a non-zero value;
    usually a ``Cmp``. Free atoms are ``Sym`` and ``Cell`` nodes; ``Load``
    nodes must have been resolved to cells before a conjunction is decided.
    """

    name = "abstract"

    def get_backend_name(self) -> str:
        return self.name

    @abstractmethod
    def decide(self, constraints: Sequence[Expr], timeout_ms: int = 5000) -> Decision:
        """Decide a conjunction.

        Args:
            constraints: Conjunction to decide
            timeout_ms: Time budget for this call

        Returns:
            Sat with a model, Unsat, or Unknown when the budget ran out
            before an answer was found
        """
        pass

    def is_satisfiable(self, constraints: Sequence[Expr], timeout_ms: int = 5000) -> bool | None:
        """True/False when decided, None when Unknown."""
        decision = self.decide(constraints, timeout_ms)
        if isinstance(decision, Sat):
            return True
        if isinstance(decision, Unsat):
            return False
        return None
