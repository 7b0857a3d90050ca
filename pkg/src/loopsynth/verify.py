"""Exact unrolling oracle for concrete loops.

Every component of ``X_{n+1} = B X_n`` satisfies a linear recurrence of order at
most ``s``; a monomial of degree ``d`` in such sequences has order at most
``s^d``, and sums add orders.  So an invariant that vanishes for the first
:func:`order_bound` iterations vanishes forever.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .pcp import InvariantSpec
from .polyring import Polynomial, Var


@dataclass(frozen=True)
class ConcreteLoop:
    """Rational ``B`` and initial vector.

    With parameters, ``X0`` entries are polynomials (affine) in ``params``.
    """

    B: tuple[tuple[Fraction, ...], ...]
    X0: tuple[Polynomial, ...]
    vars: tuple[Var, ...]
    params: tuple[Var, ...] = ()

    @classmethod
    def make(cls, B, X0, vars, params=()) -> "ConcreteLoop":
        return cls(tuple(tuple(Fraction(x) for x in row) for row in B),
                   tuple(Polynomial.lift(x) for x in X0), tuple(vars), tuple(params))

    @property
    def size(self) -> int:
        return len(self.vars)

    def instantiate(self, values: dict[Var, Fraction]) -> "ConcreteLoop":
        return ConcreteLoop(self.B, tuple(Polynomial.const(x.evaluate(values)) for x in self.X0),
                            self.vars, ())


@dataclass
class VerificationResult:
    status: str                      # holds-complete | holds-bounded | fails
    n_checked: int
    bound: int
    first_bad_n: int | None = None
    witness: dict[str, str] = field(default_factory=dict)
    trace: list[str] = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return self.status != "fails"


def order_bound(spec: InvariantSpec, s: int) -> int:
    counted = set(spec.program_vars) | set(spec.initial_vars.values())
    total = 0
    for p in spec.polys:
        for m in p.terms:
            total += s ** m.degree_in(counted)
    return max(total, 1)


def iterates(loop: ConcreteLoop, iterations: int):
    """Yield ``X_0, ..., X_iterations`` by repeated multiplication with ``B``."""
    x = list(loop.X0)
    s = loop.size
    for n in range(iterations + 1):
        yield n, x
        if n < iterations:
            x = [sum((loop.B[i][j] * x[j] for j in range(s) if loop.B[i][j]), Polynomial())
                 for i in range(s)]


def _digest(prev: str, x) -> str:
    h = hashlib.sha256(prev.encode())
    h.update("|".join(map(str, x)).encode())
    return h.hexdigest()


def unroll_check(loop: ConcreteLoop, spec: InvariantSpec, iterations: int,
                 mode: str = "complete-if-bound-met") -> VerificationResult:
    """Check every invariant polynomial on ``X_0 .. X_iterations`` exactly.

    With parameters the values are polynomials in them and the check is that the
    invariant is the zero polynomial, i.e. it holds for every instantiation.
    """
    if mode not in ("complete-if-bound-met", "bounded"):
        raise ValueError(f"unknown mode {mode!r}")
    bound = order_bound(spec, loop.size)
    x0 = loop.X0
    init = {y: x0[loop.vars.index(v)] for v, y in spec.initial_vars.items() if v in loop.vars}
    trace = []
    digest = ""
    for n, x in iterates(loop, iterations):
        binds = dict(zip(loop.vars, x))
        binds.update(init)
        digest = _digest(digest, x)
        trace.append(digest)
        for p in spec.polys:
            if p.substitute(binds):
                return VerificationResult("fails", n, bound, n,
                                          {v.name: str(val) for v, val in binds.items()}, trace)
    complete = mode == "complete-if-bound-met" and iterations >= bound
    return VerificationResult("holds-complete" if complete else "holds-bounded",
                              iterations, bound, trace=trace)


_GRID_VALUES = tuple(Fraction(x) for x in (
    0, 1, -1, "1/2", "-1/2", 2, -2, 3, "-3/4", 5, "7/3", -7, 10, "-11/5", 13, -17,
    "1/100", 64, -99, "1000/7", -1000, 4096, "-12345/2", 100003, "2/3"))


def parameter_grid(params: Sequence[Var], count: int = 25) -> list[dict[Var, Fraction]]:
    """Deterministic spread of rational parameter tuples (small and large, signed)."""
    if not params:
        return [{}]
    k = len(_GRID_VALUES)
    return [{p: _GRID_VALUES[(i + 7 * j) % k] for j, p in enumerate(params)} for i in range(count)]


def grid_check(loop: ConcreteLoop, spec: InvariantSpec, iterations: int,
               count: int = 25) -> VerificationResult:
    """Spot check a parameterized loop on a grid of concrete parameter values."""
    result = None
    for values in parameter_grid(loop.params, count):
        inst = loop.instantiate(values)
        result = unroll_check(inst, _instantiate_spec(spec, values), iterations, "bounded")
        if not result.holds:
            result.witness.update({f"param:{k.name}": str(v) for k, v in values.items()})
            return result
    return result


def _instantiate_spec(spec: InvariantSpec, values: dict[Var, Fraction]) -> InvariantSpec:
    polys = tuple(p.substitute(values) for p in spec.polys)
    return InvariantSpec(polys, spec.program_vars, spec.initial_vars, ())


def certificate(loop: ConcreteLoop, spec: InvariantSpec, result: VerificationResult) -> dict:
    return {
        "B": [[str(x) for x in row] for row in loop.B],
        "X0": [str(x) for x in loop.X0],
        "vars": [v.name for v in loop.vars],
        "params": [p.name for p in loop.params],
        "invariant": [str(p) for p in spec.polys],
        "status": result.status,
        "bound": result.bound,
        "iterations": result.n_checked,
        "trace_sha256": result.trace,
    }
