"""Tests for 64-bit expression trees."""

import pytest

from expr import (
    MASK64,
    BinOp,
    Cell,
    Cmp,
    Const,
    Load,
    Sym,
    apply_op,
    atoms,
    binop,
    cmp,
    compare,
    evaluate,
    linear_form,
    negate,
    substitute,
    to_signed,
)


class TestArithmetic:
    """Wrapping operator semantics."""

    def test_addition_wraps(self):
        """Addition wraps at 64 bits."""
        assert apply_op("+", MASK64, 2) == 1

    def test_signed_division_truncates(self):
        """Division is signed and truncates toward zero."""
        assert to_signed(apply_op("/", -7, 2)) == -3
        assert apply_op("/", 7, 2) == 3

    def test_division_by_zero(self):
        """Division by zero raises."""
        with pytest.raises(ZeroDivisionError):
            apply_op("/", 1, 0)

    def test_arithmetic_shift(self):
        """Right shift keeps the sign."""
        assert apply_op(">>", MASK64, 4) == MASK64
        assert apply_op(">>", 0x80, 4) == 0x8

    def test_shift_amount_masked(self):
        """Shift amounts use their low six bits."""
        assert apply_op("<<", 1, 65) == 2

    @pytest.mark.parametrize(
        "op,left,right,expected",
        [
            ("<", -1, 0, True),
            ("<u", -1, 0, False),
            (">=u", -1, 0, True),
            ("==", 5, 5, True),
            ("!=", 5, 5, False),
        ],
    )
    def test_compare(self, op, left, right, expected):
        """Plain comparisons are signed, u-suffixed ones unsigned."""
        assert compare(op, left, right) is expected


class TestFolding:
    """Constant folding while building nodes."""

    def test_constants_fold(self):
        """Two constants fold to one."""
        assert binop("+", Const(2), Const(3)) == Const(5)

    def test_neutral_elements(self):
        """Neutral right operands disappear."""
        g = Sym("g0")
        assert binop("+", g, Const(0)) == g
        assert binop("*", g, Const(1)) == g
        assert binop("&", g, Const(0)) == Const(0)

    def test_zero_division_not_folded(self):
        """Constant division by zero stays a node."""
        assert isinstance(binop("/", Const(1), Const(0)), BinOp)

    def test_cmp_folds(self):
        """Constant comparisons fold to 0 or 1."""
        assert cmp("!=", Const(0), Const(0)) == Const(0)
        assert cmp("<u", Const(1), Const(2)) == Const(1)

    def test_negate(self):
        """Negation flips comparison operators and 0/1 constants."""
        assert negate(Cmp("<", Sym("a"), Const(3))) == Cmp(">=", Sym("a"), Const(3))
        assert negate(Const(0)) == Const(1)


class TestEvaluation:
    """Evaluation, substitution and atom helpers."""

    def test_evaluate_with_load(self):
        """Loads go through the callback and are truncated to their size."""
        e = binop("+", Load(Sym("g1"), 2), Const(1))
        value = evaluate(e, {Sym("g1"): 0x10}, lambda addr, size, epoch: 0xABCDEF)
        assert value == 0xCDF0

    def test_evaluate_missing_atom(self):
        """An atom without value raises KeyError."""
        with pytest.raises(KeyError):
            evaluate(Sym("g0"), {})

    def test_atoms(self):
        """Atoms include symbols and cells, also under loads."""
        e = binop("+", Load(binop("+", Sym("g5"), Const(16)), 8), Cell(0x1000, 8))
        assert atoms(e) == {Sym("g5"), Cell(0x1000, 8)}

    def test_substitute_refolds(self):
        """Substituting constants folds the result."""
        e = Cmp("!=", Sym("g3"), Const(0))
        assert substitute(e, {Sym("g3"): Const(1)}) == Const(1)

    @pytest.mark.parametrize(
        "expr,expected",
        [
            (Sym("g0"), (Sym("g0"), 0)),
            (BinOp("+", Sym("g0"), Const(16)), (Sym("g0"), 16)),
            (BinOp("-", Cell(0x10, 8), Const(8)), (Cell(0x10, 8), -8)),
            (BinOp("+", Const(4), Sym("g1")), (Sym("g1"), 4)),
            (BinOp("*", Sym("g0"), Const(2)), None),
        ],
    )
    def test_linear_form(self, expr, expected):
        """Linear forms split into atom and signed offset."""
        assert linear_form(expr) == expected
