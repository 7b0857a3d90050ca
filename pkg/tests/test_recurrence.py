from fractions import Fraction

import pytest

from loopsynth.polyring import ONE, ZERO, PolyMatrix, Polynomial, Var, VarKind, mat_pow
from loopsynth.recurrence import (IntegerPartition, MatrixShape, build_templates,
                                  closed_form_column, int_partitions, shifted_coefficient,
                                  var_permutations)
from oracles import brute_partition_count

X, Y, Z = Var("x"), Var("y"), Var("z")


def test_partitions_descending_lexicographic():
    assert [p.parts for p in int_partitions(4)] == [(4,), (3, 1), (2, 2), (2, 1, 1), (1, 1, 1, 1)]
    assert [p.parts for p in int_partitions(1)] == [(1,)]


def test_partition_counts():
    assert sum(1 for _ in int_partitions(10)) == 42
    for s in range(1, 13):
        assert sum(1 for _ in int_partitions(s)) == brute_partition_count(s)


def test_partition_validation():
    with pytest.raises(ValueError):
        list(int_partitions(0))
    with pytest.raises(ValueError):
        IntegerPartition((1, 2))
    with pytest.raises(ValueError):
        IntegerPartition(())
    assert str(IntegerPartition((2, 1))) == "[2,1]"


def test_shape_parse():
    assert MatrixShape.parse("unitriangular") is MatrixShape.UNITRIANGULAR
    assert MatrixShape.parse("upper") is MatrixShape.UPPER
    with pytest.raises(ValueError):
        MatrixShape.parse("lower")


def test_permutations_respect_limit():
    assert list(var_permutations("ab")) == [("a", "b"), ("b", "a")]
    assert len(list(var_permutations("abcd", 5))) == 5


def _symbolic(p: Polynomial) -> bool:
    return bool(p.variables())


def test_template_shapes():
    p3 = IntegerPartition((3,))
    rt, _ = build_templates(3, MatrixShape.FULL, p3, (X, Y, Z))
    assert all(_symbolic(e) for e in rt.B.entries)

    rt, _ = build_templates(3, MatrixShape.UPPER, p3, (X, Y, Z))
    for i in range(3):
        for j in range(3):
            assert _symbolic(rt.B[i, j]) == (j >= i)

    rt, _ = build_templates(3, MatrixShape.UNITRIANGULAR, p3, (X, Y, Z))
    for i in range(3):
        assert rt.B[i, i] == ONE
        for j in range(i):
            assert rt.B[i, j] == ZERO
    assert all(_symbolic(rt.B[i, j]) for i in range(3) for j in range(i + 1, 3))


def test_aux_row_is_pinned():
    one = Var("one")
    rt, _ = build_templates(3, MatrixShape.FULL, IntegerPartition((3,)), (X, Y, one), aux=one)
    assert rt.B.row(2) == [ZERO, ZERO, ONE]
    assert rt.X0[2, 0] == ONE
    assert rt.aux == one


def test_parameterized_initial_vector():
    x0 = Var("x0", VarKind.INITIAL)
    rt, cft = build_templates(2, MatrixShape.FULL, IntegerPartition((2,)), (X, Y), params={X: x0})
    assert rt.params == (x0,)
    assert rt.X0[0, 0] == Polynomial.var(x0)
    # row y: a2_1 * x0 + a2_2
    assert rt.X0[1, 0].variables() - {x0}
    assert rt.basis.rows == 2
    assert cft.coeffs[1, 1].cols == 2


def test_template_errors():
    with pytest.raises(ValueError):
        build_templates(2, MatrixShape.FULL, IntegerPartition((3,)), (X, Y))
    with pytest.raises(ValueError):
        build_templates(3, MatrixShape.FULL, IntegerPartition((3,)), (X, Y))


def test_fresh_scopes_do_not_collide():
    rt1, _ = build_templates(2, MatrixShape.FULL, IntegerPartition((2,)), (X, Y))
    rt2, _ = build_templates(2, MatrixShape.FULL, IntegerPartition((2,)), (X, Y))
    assert not rt1.symbols() & rt2.symbols()


def test_closed_form_structure():
    rt, cft = build_templates(3, MatrixShape.FULL, IntegerPartition((2, 1)), (X, Y, Z))
    assert sorted(cft.coeffs) == [(1, 1), (1, 2), (2, 1)]
    assert len(cft.roots) == 2
    col = closed_form_column(cft, 0)
    # n^0 only survives at index 0
    assert col == cft.coeffs[1, 1] + cft.coeffs[2, 1]


def _bind(cft, values):
    out = {}
    for (i, j), c in cft.coeffs.items():
        for k, e in enumerate(c.entries):
            out[next(iter(e.variables()))] = values[i, j][k]
    return out


def test_jordan_block_closed_form():
    # B = [[2,1],[0,2]], X0 = (1,1):  X_n = 2^n ((1,1) + n (1/2, 0))
    _, cft = build_templates(2, MatrixShape.FULL, IntegerPartition((2,)), (X, Y))
    binds = _bind(cft, {(1, 1): [1, 1], (1, 2): [Fraction(1, 2), 0]})
    binds[cft.roots[0]] = 2
    B = PolyMatrix.from_rows([[2, 1], [0, 2]])
    x0 = PolyMatrix.column([1, 1])
    for n in range(8):
        assert closed_form_column(cft, n).substitute(binds) == mat_pow(B, n) @ x0


def test_shifted_coefficient_binomials():
    _, cft = build_templates(3, MatrixShape.FULL, IntegerPartition((3,)), (X, Y, Z))
    w = Polynomial.var(cft.roots[0])
    c = cft.coeffs
    assert shifted_coefficient(cft, 1, 1) == (c[1, 1] + c[1, 2] + c[1, 3]).scale(w)
    assert shifted_coefficient(cft, 1, 2) == (c[1, 2] + c[1, 3].scale(2)).scale(w)
    assert shifted_coefficient(cft, 1, 3) == c[1, 3].scale(w)
