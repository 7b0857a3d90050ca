"""The polynomial constraint problem whose solutions are exactly the loops we want.

The four clause families tie together the symbolic recurrence ``(A, B)``, the
symbolic closed form and the invariant:

* roots  -- the ``w_i`` are the eigenvalues of ``B`` with the chosen multiplicities,
* coeff  -- the closed form actually solves ``X_{n+1} = B X_n``,
* init   -- the closed form agrees with ``B^i X_0`` for the first ``s`` indices,
* alg    -- the invariant vanishes on the closed form for every ``n``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .polyring import (ONE, ZERO, Polynomial, Var, VarKind, char_poly,
                       mat_powers)
from .recurrence import (ClosedFormTemplate, RecurrenceTemplate, closed_form_column,
                         shifted_coefficient)


class UnknownVariableError(ValueError):
    pass


class Rel(enum.Enum):
    EQ = "eq0"
    NEQ = "neq0"


@dataclass(frozen=True)
class Constraint:
    poly: Polynomial
    rel: Rel

    @classmethod
    def eq(cls, p: Polynomial) -> "Constraint":
        return cls(p.sign_normalized(), Rel.EQ)

    @classmethod
    def neq(cls, p: Polynomial) -> "Constraint":
        return cls(p.sign_normalized(), Rel.NEQ)

    def truth(self) -> bool | None:
        """Truth value when the polynomial is constant, else ``None``."""
        if not self.poly.is_constant():
            return None
        zero = not self.poly
        return zero if self.rel is Rel.EQ else not zero

    def holds(self, values: Mapping[Var, Fraction]) -> bool:
        v = self.poly.evaluate(values)
        return v == 0 if self.rel is Rel.EQ else v != 0

    def __str__(self):
        return f"{self.poly} {'=' if self.rel is Rel.EQ else '!='} 0"


FALSE = Constraint(ONE, Rel.EQ)


@dataclass(frozen=True)
class Clause:
    disjuncts: tuple[Constraint, ...]
    tag: str = field(default="", compare=False)

    def __post_init__(self):
        if not self.disjuncts:
            raise ValueError("a clause needs at least one disjunct")

    @property
    def is_unit(self) -> bool:
        return len(self.disjuncts) == 1

    def holds(self, values) -> bool:
        return any(c.holds(values) for c in self.disjuncts)

    def variables(self) -> frozenset:
        out = frozenset()
        for c in self.disjuncts:
            out |= c.poly.variables()
        return out

    def __str__(self):
        return " or ".join(map(str, self.disjuncts))


def _simplify(clause: Clause) -> Clause | None:
    """Drop false disjuncts; ``None`` if the clause is trivially true."""
    kept = []
    for c in clause.disjuncts:
        t = c.truth()
        if t is True:
            return None
        if t is None:
            kept.append(c)
    if not kept:
        return Clause((FALSE,), clause.tag)
    return Clause(tuple(kept), clause.tag)


@dataclass
class ClauseSet:
    clauses: list[Clause]
    free_vars: tuple[Var, ...] = ()

    @classmethod
    def build(cls, clauses: Iterable[Clause]) -> "ClauseSet":
        seen = set()
        out = []
        for cl in clauses:
            cl = _simplify(cl)
            if cl is None or cl in seen:
                continue
            seen.add(cl)
            out.append(cl)
        free = set()
        for cl in out:
            free |= cl.variables()
        return cls(out, tuple(sorted(free)))

    def __len__(self):
        return len(self.clauses)

    def __iter__(self):
        return iter(self.clauses)

    def __or__(self, other: "ClauseSet") -> "ClauseSet":
        return ClauseSet.build(self.clauses + other.clauses)

    def polys(self, rel: Rel | None = None) -> list[Polynomial]:
        return [c.poly for cl in self.clauses for c in cl.disjuncts if rel is None or c.rel is rel]

    @property
    def trivially_unsat(self) -> bool:
        return any(cl.disjuncts == (FALSE,) for cl in self.clauses)

    def max_degree(self) -> int:
        return max((p.total_degree() for p in self.polys()), default=0)

    def satisfied_by(self, values: Mapping[Var, Fraction]) -> bool:
        return all(cl.holds(values) for cl in self.clauses)

    def to_text(self) -> str:
        return "\n".join(f"[{cl.tag}] {cl}" if cl.tag else str(cl) for cl in self.clauses)

    def to_records(self) -> list[dict]:
        return [{"tag": cl.tag,
                 "disjuncts": [{"poly": str(c.poly), "rel": c.rel.value} for c in cl.disjuncts]}
                for cl in self.clauses]

    def to_json(self) -> str:
        return json.dumps({"free_vars": [v.name for v in self.free_vars],
                           "clauses": self.to_records()}, indent=2)


def _units(polys: Iterable[Polynomial], tag: str) -> ClauseSet:
    return ClauseSet.build(Clause((Constraint.eq(p),), tag) for p in polys if p)


@dataclass(frozen=True)
class InvariantSpec:
    """A conjunction ``p_1 = 0 and ... and p_k = 0``.

    ``initial_vars`` maps a program variable to the symbol for its value before
    the loop; ``params`` lists those initial values that stay symbolic.
    """

    polys: tuple[Polynomial, ...]
    program_vars: tuple[Var, ...]
    initial_vars: Mapping[Var, Var]
    params: tuple[Var, ...] = ()

    def __post_init__(self):
        if not self.polys:
            raise ValueError("an invariant needs at least one polynomial")
        allowed = set(self.program_vars) | set(self.initial_vars.values())
        for p in self.polys:
            stray = p.variables() - allowed
            if stray:
                raise UnknownVariableError(f"unknown variables {sorted(v.name for v in stray)}")
        inits = set(self.initial_vars.values())
        for q in self.params:
            if q not in inits:
                raise ValueError(f"parameter {q} is not an initial value")

    def variables(self) -> frozenset:
        out = frozenset()
        for p in self.polys:
            out |= p.variables()
        return out

    def mentioned_program_vars(self) -> tuple[Var, ...]:
        used = self.variables()
        return tuple(v for v in self.program_vars if v in used)

    def param_map(self) -> dict[Var, Var]:
        return {x: y for x, y in self.initial_vars.items() if y in self.params}


# ---------------------------------------------------------------------------
# clause families


def roots_constraints(rt: RecurrenceTemplate, cft: ClosedFormTemplate) -> ClauseSet:
    z = Var("z", VarKind.ITERATION, rt.scope)
    zp = Polynomial.var(z)
    target = ONE
    for w, m in zip(cft.roots, cft.mults):
        target = target * (zp - Polynomial.var(w)) ** m
    diff = char_poly(rt.B, z) - target
    eqs = [q for q in diff.collect_by([z]).values()]
    clauses = list(_units(eqs, "roots"))
    ws = [Polynomial.var(w) for w in cft.roots]
    for i in range(len(ws)):
        for j in range(i + 1, len(ws)):
            clauses.append(Clause((Constraint.neq(ws[i] - ws[j]),), "roots"))
    for w in ws:
        clauses.append(Clause((Constraint.neq(w),), "roots"))
    return ClauseSet.build(clauses)


def coeff_constraints(rt: RecurrenceTemplate, cft: ClosedFormTemplate) -> ClauseSet:
    polys = []
    for (i, j) in sorted(cft.coeffs):
        d = shifted_coefficient(cft, i, j) - rt.B @ cft.column(i, j)
        polys.extend(d.entries)
    return _units(polys, "coeff")


def init_constraints(rt: RecurrenceTemplate, cft: ClosedFormTemplate) -> ClauseSet:
    polys = []
    x0 = rt.X0
    for i, bi in enumerate(mat_powers(rt.B, rt.size)):
        m = closed_form_column(cft, i) - bi @ x0
        polys.extend(m.entries)
    return _units(polys, "init")


def _bindings(spec: InvariantSpec, rt: RecurrenceTemplate, cft: ClosedFormTemplate) -> dict:
    template_vars = set(rt.var_order)
    for v in spec.program_vars:
        if v not in template_vars:
            raise UnknownVariableError(f"variable {v} is not part of the recurrence template")
    xs = closed_form_column(cft, None)
    x0 = rt.X0
    binds: dict[Var, Polynomial] = {}
    for row, v in enumerate(rt.var_order):
        binds[v] = xs[row, 0]
        y = spec.initial_vars.get(v)
        if y is not None and y not in rt.params:
            binds[y] = x0[row, 0]
    return binds


def alg_constraints(spec: InvariantSpec, rt: RecurrenceTemplate, cft: ClosedFormTemplate) -> ClauseSet:
    binds = _bindings(spec, rt, cft)
    polys = []
    for p in spec.polys:
        p_n = p.substitute(binds)
        for _, q in sorted(p_n.collect_by([cft.n]).items(), key=lambda kq: kq[0].degree):
            # q = sum_k u_k * w_k^n with w_k a power product of the roots
            groups = q.collect_by(cft.markers)
            for j in range(len(groups)):
                at_j = {W: Polynomial.var(w) ** j for W, w in zip(cft.markers, cft.roots)}
                total = ZERO
                for key, u in groups.items():
                    total = total + Polynomial._owned({key: Fraction(1)}).substitute(at_j) * u
                polys.append(total)
    return _units(polys, "alg")


def decompose_params(cs: ClauseSet, params: Sequence[Var]) -> ClauseSet:
    """Split every unit equality into the coefficients of its parameter monomials."""
    if not params:
        return cs
    out = []
    for cl in cs:
        c = cl.disjuncts[0]
        if cl.is_unit and c.rel is Rel.EQ:
            for coeff in c.poly.collect_by(params).values():
                out.append(Clause((Constraint.eq(coeff),), cl.tag))
        else:
            out.append(cl)
    return ClauseSet.build(out)


class GuardMode(enum.Enum):
    NONE = "none"
    ALL = "nonconstant-all"
    ANY = "nonconstant-any"

    @classmethod
    def parse(cls, text: str) -> "GuardMode":
        aliases = {"none": cls.NONE, "all": cls.ALL, "any": cls.ANY,
                   "nonconstant-all": cls.ALL, "nonconstant-any": cls.ANY}
        try:
            return aliases[text]
        except KeyError:
            raise ValueError(f"unknown guard mode {text!r}") from None


def guard_constraints(rt: RecurrenceTemplate, mode: GuardMode,
                      vars: Sequence[Var] | None = None) -> ClauseSet:
    """Forbid loops whose first iteration leaves a variable unchanged.

    With parameters the step ``(B - I) X_0`` is a polynomial in them; it is
    nonzero iff one of its parameter coefficients is.
    """
    if mode is GuardMode.NONE:
        return ClauseSet([])
    if vars is None:
        vars = [v for v in rt.var_order if v != rt.aux]
    x0 = rt.X0
    step = rt.B @ x0 - x0
    per_row = []
    for v in vars:
        g = step[rt.row_of(v), 0]
        if rt.params:
            coeffs = [c for c in g.collect_by(rt.params).values() if c]
        else:
            coeffs = [g] if g else []
        per_row.append(tuple(Constraint.neq(c) for c in coeffs) or (FALSE,))
    if mode is GuardMode.ALL:
        return ClauseSet.build(Clause(d, "guard") for d in per_row)
    flat = tuple(c for d in per_row for c in d if c != FALSE) or (FALSE,)
    return ClauseSet.build([Clause(flat, "guard")])


def assemble(spec: InvariantSpec, rt: RecurrenceTemplate, cft: ClosedFormTemplate,
             guard_mode: GuardMode = GuardMode.ALL, guard_vars: Sequence[Var] | None = None) -> ClauseSet:
    if guard_vars is None:
        guard_vars = spec.mentioned_program_vars()
    parts = (roots_constraints(rt, cft), init_constraints(rt, cft),
             coeff_constraints(rt, cft), alg_constraints(spec, rt, cft))
    cs = ClauseSet.build(cl for part in parts for cl in part)
    if rt.params:
        cs = decompose_params(cs, rt.params)
    guards = guard_constraints(rt, guard_mode, guard_vars)
    return ClauseSet.build(list(cs) + list(guards))
