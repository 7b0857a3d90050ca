"""Symbolic recurrence templates ``X_{n+1} = B X_n`` and matching closed forms."""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from math import comb
from typing import Iterator, Mapping, Sequence

from .polyring import ONE, ZERO, PolyMatrix, Polynomial, Var, VarKind

_scopes = itertools.count(1)


class MatrixShape(enum.Enum):
    FULL = "full"
    UPPER = "upper-triangular"
    UNITRIANGULAR = "upper-unitriangular"

    @classmethod
    def parse(cls, text: str) -> "MatrixShape":
        aliases = {"full": cls.FULL, "upper": cls.UPPER, "triangular": cls.UPPER,
                   "upper-triangular": cls.UPPER, "unitriangular": cls.UNITRIANGULAR,
                   "upper-unitriangular": cls.UNITRIANGULAR}
        try:
            return aliases[text]
        except KeyError:
            raise ValueError(f"unknown matrix shape {text!r}") from None


# cheapest first
DEFAULT_SHAPES = (MatrixShape.UNITRIANGULAR, MatrixShape.UPPER, MatrixShape.FULL)


@dataclass(frozen=True)
class IntegerPartition:
    parts: tuple[int, ...]

    def __post_init__(self):
        if not self.parts or any(p < 1 for p in self.parts):
            raise ValueError(f"invalid partition {self.parts}")
        if list(self.parts) != sorted(self.parts, reverse=True):
            raise ValueError(f"partition parts must be non-increasing: {self.parts}")

    @property
    def total(self) -> int:
        return sum(self.parts)

    def __iter__(self):
        return iter(self.parts)

    def __len__(self):
        return len(self.parts)

    def __str__(self):
        return "[" + ",".join(map(str, self.parts)) + "]"


def int_partitions(s: int) -> Iterator[IntegerPartition]:
    """All partitions of ``s`` in descending lexicographic order (``[s]`` first)."""
    if s < 1:
        raise ValueError("empty system: size must be at least 1")

    def gen(n, largest):
        if n == 0:
            yield ()
            return
        for first in range(min(n, largest), 0, -1):
            for rest in gen(n - first, first):
                yield (first,) + rest

    for parts in gen(s, s):
        yield IntegerPartition(parts)


def var_permutations(vars: Sequence, limit: int | None = None) -> Iterator[tuple]:
    perms = itertools.permutations(vars)
    return itertools.islice(perms, limit) if limit is not None else perms


@dataclass(frozen=True)
class RecurrenceTemplate:
    """``X_{n+1} = B X_n`` with ``X_0 = A`` (or ``A * basis`` when parameterized).

    ``basis`` is the column ``(p_1, ..., p_r, 1)`` of parameters; it is ``None``
    for non-parameterized templates.
    """

    size: int
    shape: MatrixShape
    B: PolyMatrix
    A: PolyMatrix
    params: tuple[Var, ...]
    var_order: tuple[Var, ...]
    basis: PolyMatrix | None
    aux: Var | None
    scope: int

    @property
    def X0(self) -> PolyMatrix:
        return self.A if self.basis is None else self.A @ self.basis

    @property
    def parameterized(self) -> bool:
        return bool(self.params)

    def symbols(self) -> frozenset:
        return self.A.variables() | self.B.variables()

    def row_of(self, v: Var) -> int:
        return self.var_order.index(v)


@dataclass(frozen=True)
class ClosedFormTemplate:
    """``X_n = sum_i sum_j C_ij * basis * w_i^n * n^(j-1)``."""

    roots: tuple[Var, ...]
    markers: tuple[Var, ...]      # markers[i] stands for roots[i]^n
    n: Var
    mults: IntegerPartition
    coeffs: Mapping[tuple[int, int], PolyMatrix]   # (i, j), both 1-based
    basis: PolyMatrix | None

    def symbols(self) -> frozenset:
        out = frozenset(self.roots)
        for c in self.coeffs.values():
            out |= c.variables()
        return out

    def column(self, i: int, j: int) -> PolyMatrix:
        c = self.coeffs[i, j]
        return c if self.basis is None else c @ self.basis


def build_templates(size: int, shape: MatrixShape, partition: IntegerPartition,
                    var_order: Sequence[Var], params: Mapping[Var, Var] | None = None,
                    aux: Var | None = None) -> tuple[RecurrenceTemplate, ClosedFormTemplate]:
    """Fresh symbolic templates for one configuration.

    ``params`` maps a program variable to the parameter holding its initial
    value.  ``aux`` names the variable that is pinned to the constant 1.
    """
    if partition.total != size:
        raise ValueError(f"partition {partition} does not sum to size {size}")
    if len(var_order) != size:
        raise ValueError(f"need {size} variables, got {len(var_order)}")
    params = dict(params or {})
    for v in params:
        if v not in var_order:
            raise ValueError(f"parameter variable {v} is not a program variable")
    scope = next(_scopes)
    s = size
    aux_row = var_order.index(aux) if aux is not None else None

    def sym(kind, name):
        return Polynomial.var(Var(name, kind, scope))

    entries = []
    for i in range(s):
        for j in range(s):
            if i == aux_row:
                entries.append(ONE if i == j else ZERO)
            elif shape is MatrixShape.FULL or j > i:
                entries.append(sym(VarKind.B, f"b{i + 1}_{j + 1}"))
            elif j < i:
                entries.append(ZERO)
            elif shape is MatrixShape.UNITRIANGULAR:
                entries.append(ONE)
            else:
                entries.append(sym(VarKind.B, f"b{i + 1}_{j + 1}"))
    B = PolyMatrix(s, s, entries)

    param_list = tuple(params[v] for v in var_order if v in params)
    if not param_list:
        A = PolyMatrix.column([ONE if i == aux_row else sym(VarKind.A, f"a{i + 1}") for i in range(s)])
        basis = None
    else:
        r = len(param_list)
        pinned = {var_order.index(v): param_list.index(p) for v, p in params.items()}
        rows = []
        for i in range(s):
            if i in pinned:
                rows.append([ONE if j == pinned[i] else ZERO for j in range(r + 1)])
            elif i == aux_row:
                rows.append([ONE if j == r else ZERO for j in range(r + 1)])
            else:
                rows.append([sym(VarKind.A, f"a{i + 1}_{j + 1}") for j in range(r + 1)])
        A = PolyMatrix.from_rows(rows)
        basis = PolyMatrix.column([Polynomial.var(p) for p in param_list] + [ONE])

    rt = RecurrenceTemplate(size=s, shape=shape, B=B, A=A, params=param_list,
                            var_order=tuple(var_order), basis=basis, aux=aux, scope=scope)

    t = len(partition)
    roots = tuple(Var(f"w{i + 1}", VarKind.OMEGA, scope) for i in range(t))
    markers = tuple(Var(f"W{i + 1}", VarKind.ROOT_POWER, scope) for i in range(t))
    ncols = 1 if basis is None else basis.rows
    coeffs = {}
    for i, m in enumerate(partition, start=1):
        for j in range(1, m + 1):
            if ncols == 1:
                names = [f"c{i}_{j}_{k + 1}" for k in range(s)]
            else:
                names = [f"c{i}_{j}_{k + 1}_{l + 1}" for k in range(s) for l in range(ncols)]
            coeffs[i, j] = PolyMatrix(s, ncols, [sym(VarKind.C, nm) for nm in names])
    cft = ClosedFormTemplate(roots=roots, markers=markers, n=Var("n", VarKind.ITERATION, scope),
                             mults=partition, coeffs=coeffs, basis=basis)
    return rt, cft


def closed_form_column(cft: ClosedFormTemplate, n_value: int | None = None) -> PolyMatrix:
    """Closed-form column at symbolic ``n`` (``None``) or at a concrete index.

    Symbolically, ``w_i^n`` is the marker variable and ``n`` the iteration
    variable; at a concrete index both are expanded.
    """
    out = None
    for (i, j), _ in sorted(cft.coeffs.items()):
        col = cft.column(i, j)
        if n_value is None:
            factor = Polynomial.var(cft.markers[i - 1]) * Polynomial.var(cft.n) ** (j - 1)
        else:
            # 0^0 == 1 for the leading power of n
            factor = Polynomial.var(cft.roots[i - 1]) ** n_value * (n_value ** (j - 1))
        term = col.scale(factor)
        out = term if out is None else out + term
    return out


def shifted_coefficient(cft: ClosedFormTemplate, i: int, j: int) -> PolyMatrix:
    """``sum_{k=j}^{m_i} binom(k-1, j-1) C_ik w_i`` -- coefficient of ``w_i^n n^(j-1)`` in ``X_{n+1}``."""
    m = cft.mults.parts[i - 1]
    w = Polynomial.var(cft.roots[i - 1])
    out = None
    for k in range(j, m + 1):
        term = cft.column(i, k).scale(w * comb(k - 1, j - 1))
        out = term if out is None else out + term
    return out
