"""Exact multivariate polynomials over the rationals and symbolic matrices.

Everything in here is immutable.  Polynomials are kept in canonical form (no
zero coefficients), so structural equality is mathematical equality.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Iterator, Mapping, Sequence, Union


class DimensionError(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class VarKind(enum.Enum):
    PROGRAM = "program-var"
    INITIAL = "initial-param"
    ITERATION = "iteration-n"
    ROOT_POWER = "root-power"
    OMEGA = "root-omega"
    A = "symbolic-entry-a"
    B = "symbolic-entry-b"
    C = "closed-form-coeff-c"


_KIND_RANK = {kind: i for i, kind in enumerate(VarKind)}


def _natural_key(name: str) -> tuple:
    return tuple((1, int(tok)) if tok.isdigit() else (0, tok)
                 for tok in re.split(r"(\d+)", name) if tok)


@dataclass(frozen=True)
class Var:
    """A named symbol.  ``scope`` separates symbol families of different builds."""

    name: str
    kind: VarKind = VarKind.PROGRAM
    scope: int = 0
    key: tuple = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        if not self.name:
            raise ValueError("variable name must be non-empty")
        object.__setattr__(self, "key", (_KIND_RANK[self.kind], self.scope, _natural_key(self.name)))

    def __lt__(self, other: "Var") -> bool:
        return self.key < other.key

    def __str__(self) -> str:
        return self.name


_SENTINEL = ((len(VarKind),), 0)


class Monomial:
    """Power product of variables; the empty product is the constant monomial."""

    __slots__ = ("powers", "_hash")

    def __init__(self, powers: Iterable[tuple[Var, int]] = ()):
        merged: dict[Var, int] = {}
        for v, e in powers:
            if e < 0:
                raise ValueError("negative exponent")
            if e:
                merged[v] = merged.get(v, 0) + e
        self.powers = tuple(sorted(merged.items(), key=lambda ve: ve[0].key))
        self._hash = hash(self.powers)

    @classmethod
    def _raw(cls, powers: tuple) -> "Monomial":
        m = object.__new__(cls)
        m.powers = powers
        m._hash = hash(powers)
        return m

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        return isinstance(other, Monomial) and self.powers == other.powers

    def __mul__(self, other: "Monomial") -> "Monomial":
        if not other.powers:
            return self
        if not self.powers:
            return other
        merged = dict(self.powers)
        for v, e in other.powers:
            merged[v] = merged.get(v, 0) + e
        return Monomial._raw(tuple(sorted(merged.items(), key=lambda ve: ve[0].key)))

    def __pow__(self, k: int) -> "Monomial":
        if k == 0:
            return ONE_MONOMIAL
        return Monomial._raw(tuple((v, e * k) for v, e in self.powers))

    @property
    def degree(self) -> int:
        return sum(e for _, e in self.powers)

    def degree_in(self, vars: Iterable[Var]) -> int:
        vs = set(vars)
        return sum(e for v, e in self.powers if v in vs)

    def exponent(self, v: Var) -> int:
        for w, e in self.powers:
            if w == v:
                return e
        return 0

    def variables(self) -> tuple[Var, ...]:
        return tuple(v for v, _ in self.powers)

    def split(self, vars: frozenset) -> tuple["Monomial", "Monomial"]:
        """Split into (part over ``vars``, remaining part)."""
        inside = tuple(ve for ve in self.powers if ve[0] in vars)
        outside = tuple(ve for ve in self.powers if ve[0] not in vars)
        return Monomial._raw(inside), Monomial._raw(outside)

    def sort_key(self) -> tuple:
        # ascending sort puts the graded-lex leading monomial first
        return (-self.degree, tuple((v.key, -e) for v, e in self.powers) + (_SENTINEL,))

    def __str__(self):
        if not self.powers:
            return "1"
        return "*".join(v.name if e == 1 else f"{v.name}^{e}" for v, e in self.powers)

    def __repr__(self):
        return f"Monomial({str(self)!r})"


ONE_MONOMIAL = Monomial()

Scalar = Union[int, Fraction]


def _fmt_rational(c: Fraction) -> str:
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


class Polynomial:
    """Multivariate polynomial with exact rational coefficients."""

    __slots__ = ("terms", "_hash")

    def __init__(self, terms: Mapping[Monomial, Scalar] | None = None):
        clean: dict[Monomial, Fraction] = {}
        if terms:
            for m, c in terms.items():
                c = Fraction(c)
                if c:
                    clean[m] = c
        self.terms = clean
        self._hash = None

    @classmethod
    def _owned(cls, terms: dict) -> "Polynomial":
        p = object.__new__(cls)
        p.terms = terms
        p._hash = None
        return p

    @classmethod
    def const(cls, c: Scalar) -> "Polynomial":
        c = Fraction(c)
        return cls._owned({ONE_MONOMIAL: c} if c else {})

    @classmethod
    def var(cls, v: Var) -> "Polynomial":
        return cls._owned({Monomial._raw(((v, 1),)): Fraction(1)})

    @staticmethod
    def lift(x) -> "Polynomial":
        if isinstance(x, Polynomial):
            return x
        if isinstance(x, Var):
            return Polynomial.var(x)
        if isinstance(x, (int, Fraction)):
            return Polynomial.const(x)
        raise TypeError(f"cannot convert {type(x).__name__} to Polynomial")

    # -- ring operations -------------------------------------------------

    def __add__(self, other) -> "Polynomial":
        other = Polynomial.lift(other)
        out = dict(self.terms)
        for m, c in other.terms.items():
            s = out.get(m, 0) + c
            if s:
                out[m] = s
            else:
                out.pop(m, None)
        return Polynomial._owned(out)

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return Polynomial._owned({m: -c for m, c in self.terms.items()})

    def __sub__(self, other) -> "Polynomial":
        return self + (-Polynomial.lift(other))

    def __rsub__(self, other) -> "Polynomial":
        return Polynomial.lift(other) - self

    def __mul__(self, other) -> "Polynomial":
        other = Polynomial.lift(other)
        if not self.terms or not other.terms:
            return ZERO
        out: dict[Monomial, Fraction] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = m1 * m2
                s = out.get(m, 0) + c1 * c2
                if s:
                    out[m] = s
                else:
                    out.pop(m, None)
        return Polynomial._owned(out)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Polynomial":
        other = Polynomial.lift(other)
        if not other.is_constant() or not other:
            raise ZeroDivisionError("division only by nonzero constants")
        inv = 1 / other.constant_value()
        return Polynomial._owned({m: c * inv for m, c in self.terms.items()})

    def __pow__(self, k: int) -> "Polynomial":
        if k < 0:
            raise ValueError("negative power")
        result, base = ONE, self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, Fraction, Var)):
            other = Polynomial.lift(other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.terms == other.terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self.terms.items()))
        return self._hash

    def __bool__(self) -> bool:
        return bool(self.terms)

    # -- inspection -------------------------------------------------------

    def is_constant(self) -> bool:
        return not self.terms or (len(self.terms) == 1 and ONE_MONOMIAL in self.terms)

    def constant_value(self) -> Fraction:
        if not self.is_constant():
            raise ValueError(f"{self} is not constant")
        return self.terms.get(ONE_MONOMIAL, Fraction(0))

    def constant_term(self) -> Fraction:
        return self.terms.get(ONE_MONOMIAL, Fraction(0))

    def variables(self) -> frozenset:
        return frozenset(v for m in self.terms for v, _ in m.powers)

    def total_degree(self) -> int:
        return max((m.degree for m in self.terms), default=0)

    def degree_in(self, v: Var) -> int:
        return max((m.exponent(v) for m in self.terms), default=0)

    def sorted_terms(self) -> list[tuple[Monomial, Fraction]]:
        return sorted(self.terms.items(), key=lambda mc: mc[0].sort_key())

    def leading_coefficient(self) -> Fraction:
        terms = self.sorted_terms()
        return terms[0][1] if terms else Fraction(0)

    def sign_normalized(self) -> "Polynomial":
        return -self if self.leading_coefficient() < 0 else self

    # -- substitution and collection ---------------------------------------

    def substitute(self, bindings: Mapping[Var, "Polynomial | Scalar"]) -> "Polynomial":
        """Simultaneously replace variables; unbound variables pass through."""
        if not bindings:
            return self
        binds = {v: Polynomial.lift(p) for v, p in bindings.items()}
        cache: dict[tuple[Var, int], Polynomial] = {}

        def power(v, e):
            key = (v, e)
            if key not in cache:
                cache[key] = binds[v] ** e
            return cache[key]

        out = ZERO
        for m, c in self.terms.items():
            term = Polynomial._owned({Monomial._raw(tuple(ve for ve in m.powers if ve[0] not in binds)): c})
            for v, e in m.powers:
                if v in binds:
                    term = term * power(v, e)
            out = out + term
        return out

    def collect_by(self, vars: Sequence[Var]) -> dict[Monomial, "Polynomial"]:
        """Group terms by their monomial over ``vars``.

        Returns ``{key: coeff}`` with ``sum(key * coeff) == self`` and no coefficient
        mentioning any of ``vars``.
        """
        vs = frozenset(vars)
        groups: dict[Monomial, dict[Monomial, Fraction]] = {}
        for m, c in self.terms.items():
            inside, outside = m.split(vs)
            groups.setdefault(inside, {})[outside] = c
        keys = sorted(groups, key=Monomial.sort_key)
        return {k: Polynomial._owned(groups[k]) for k in keys}

    def evaluate(self, values: Mapping[Var, Scalar]) -> Fraction:
        total = Fraction(0)
        for m, c in self.terms.items():
            term = c
            for v, e in m.powers:
                term *= Fraction(values[v]) ** e
            total += term
        return total

    # -- printing -------------------------------------------------------

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for i, (m, c) in enumerate(self.sorted_terms()):
            sign = "-" if c < 0 else "+"
            a = abs(c)
            if m is ONE_MONOMIAL or not m.powers:
                body = _fmt_rational(a)
            elif a == 1:
                body = str(m)
            else:
                body = f"{_fmt_rational(a)}*{m}"
            if i == 0:
                parts.append(body if sign == "+" else f"-{body}")
            else:
                parts.append(f" {sign} {body}")
        return "".join(parts)

    def __repr__(self):
        return f"Polynomial({str(self)!r})"


ZERO = Polynomial()
ONE = Polynomial.const(1)


def poly_arith(lhs: Polynomial, rhs: Polynomial, op: str) -> Polynomial:
    if op == "add":
        return lhs + rhs
    if op == "sub":
        return lhs - rhs
    if op == "mul":
        return lhs * rhs
    raise ValueError(f"unknown operation {op!r}")


def reassemble(groups: Mapping[Monomial, Polynomial]) -> Polynomial:
    """Inverse of :meth:`Polynomial.collect_by`."""
    out = ZERO
    for key, coeff in groups.items():
        out = out + Polynomial._owned({key: Fraction(1)}) * coeff
    return out


# ---------------------------------------------------------------------------
# Matrices


class PolyMatrix:
    """Dense row-major matrix of polynomials."""

    __slots__ = ("rows", "cols", "entries")

    def __init__(self, rows: int, cols: int, entries: Iterable):
        entries = tuple(Polynomial.lift(e) for e in entries)
        if rows <= 0 or cols <= 0:
            raise DimensionError("matrix dimensions must be positive")
        if len(entries) != rows * cols:
            raise DimensionError(f"expected {rows * cols} entries, got {len(entries)}")
        self.rows, self.cols, self.entries = rows, cols, entries

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence]) -> "PolyMatrix":
        if not rows or any(len(r) != len(rows[0]) for r in rows):
            raise DimensionError("ragged or empty row list")
        return cls(len(rows), len(rows[0]), [e for r in rows for e in r])

    @classmethod
    def column(cls, entries: Sequence) -> "PolyMatrix":
        return cls(len(entries), 1, entries)

    @classmethod
    def identity(cls, n: int) -> "PolyMatrix":
        return cls(n, n, [1 if i == j else 0 for i in range(n) for j in range(n)])

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "PolyMatrix":
        return cls(rows, cols, [0] * (rows * cols))

    def __getitem__(self, ij: tuple[int, int]) -> Polynomial:
        i, j = ij
        return self.entries[i * self.cols + j]

    def row(self, i: int) -> list[Polynomial]:
        return list(self.entries[i * self.cols:(i + 1) * self.cols])

    def col(self, j: int) -> list[Polynomial]:
        return [self.entries[i * self.cols + j] for i in range(self.rows)]

    def tolist(self) -> list[list[Polynomial]]:
        return [self.row(i) for i in range(self.rows)]

    @property
    def is_square(self) -> bool:
        return self.rows == self.cols

    def __eq__(self, other):
        return (isinstance(other, PolyMatrix) and self.rows == other.rows
                and self.cols == other.cols and self.entries == other.entries)

    def __hash__(self):
        return hash((self.rows, self.cols, self.entries))

    def _same_shape(self, other: "PolyMatrix"):
        if (self.rows, self.cols) != (other.rows, other.cols):
            raise DimensionError(f"{self.rows}x{self.cols} vs {other.rows}x{other.cols}")

    def __add__(self, other: "PolyMatrix") -> "PolyMatrix":
        self._same_shape(other)
        return PolyMatrix(self.rows, self.cols, [a + b for a, b in zip(self.entries, other.entries)])

    def __sub__(self, other: "PolyMatrix") -> "PolyMatrix":
        self._same_shape(other)
        return PolyMatrix(self.rows, self.cols, [a - b for a, b in zip(self.entries, other.entries)])

    def __neg__(self) -> "PolyMatrix":
        return PolyMatrix(self.rows, self.cols, [-a for a in self.entries])

    def scale(self, p) -> "PolyMatrix":
        p = Polynomial.lift(p)
        return PolyMatrix(self.rows, self.cols, [p * a for a in self.entries])

    def __matmul__(self, other: "PolyMatrix") -> "PolyMatrix":
        if self.cols != other.rows:
            raise DimensionError(f"cannot multiply {self.rows}x{self.cols} by {other.rows}x{other.cols}")
        out = []
        for i in range(self.rows):
            r = self.row(i)
            for j in range(other.cols):
                acc = ZERO
                for k in range(self.cols):
                    if r[k] and other[k, j]:
                        acc = acc + r[k] * other[k, j]
                out.append(acc)
        return PolyMatrix(self.rows, other.cols, out)

    def map(self, fn: Callable[[Polynomial], Polynomial]) -> "PolyMatrix":
        return PolyMatrix(self.rows, self.cols, [fn(e) for e in self.entries])

    def substitute(self, bindings) -> "PolyMatrix":
        return self.map(lambda e: e.substitute(bindings))

    def variables(self) -> frozenset:
        out: set = set()
        for e in self.entries:
            out |= e.variables()
        return frozenset(out)

    def __repr__(self):
        return "PolyMatrix([" + ", ".join("[" + ", ".join(map(str, r)) + "]" for r in self.tolist()) + "])"


def mat_arith(m: PolyMatrix, n: PolyMatrix, op: str) -> PolyMatrix:
    if op == "add":
        return m + n
    if op == "sub":
        return m - n
    if op == "mul":
        return m @ n
    raise ValueError(f"unknown operation {op!r}")


def mat_pow(m: PolyMatrix, k: int) -> PolyMatrix:
    if not m.is_square:
        raise DimensionError("matrix power needs a square matrix")
    if k < 0:
        raise ValueError("negative matrix power")
    out = PolyMatrix.identity(m.rows)
    for _ in range(k):
        out = out @ m
    return out


def mat_powers(m: PolyMatrix, k: int) -> list[PolyMatrix]:
    """``[m^0, m^1, ..., m^(k-1)]``."""
    if not m.is_square:
        raise DimensionError("matrix power needs a square matrix")
    out = [PolyMatrix.identity(m.rows)]
    while len(out) < k:
        out.append(out[-1] @ m)
    return out[:k]


def berkowitz(m: PolyMatrix) -> list[Polynomial]:
    """Coefficients ``[1, c_{n-1}, ..., c_0]`` of ``det(zI - m)``, highest degree first.

    Division free, so it works for matrices with symbolic entries.
    """
    if not m.is_square:
        raise DimensionError("characteristic polynomial needs a square matrix")
    n = m.rows
    poly = [ONE]
    for r in range(n):
        # leading (r+1)x(r+1) block is [[A_r, C], [R, a]]
        a = m[r, r]
        R = [m[r, j] for j in range(r)]
        col = [m[i, r] for i in range(r)]
        toeplitz = [ONE, -a]
        vec = col
        for _ in range(r):
            toeplitz.append(-sum((x * y for x, y in zip(R, vec)), ZERO))
            vec = [sum((m[i, j] * vec[j] for j in range(r)), ZERO) for i in range(r)]
        poly = [sum((toeplitz[i - j] * poly[j] for j in range(len(poly)) if 0 <= i - j < len(toeplitz)), ZERO)
                for i in range(r + 2)]
    return poly


def char_poly(m: PolyMatrix, z: Var) -> Polynomial:
    coeffs = berkowitz(m)
    zp = Polynomial.var(z)
    n = len(coeffs) - 1
    return sum((c * zp ** (n - i) for i, c in enumerate(coeffs)), ZERO)


# ---------------------------------------------------------------------------
# Text syntax:  3*x^2*y - 1/2

_TOKEN = re.compile(r"\s*(?:(?P<num>\d+(?:\.\d+)?)|(?P<id>[A-Za-z][A-Za-z0-9_]*)|(?P<op>==|&&|[-+*/^()]))")


def tokenize(text: str) -> list[tuple[str, str, int]]:
    out = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m:
            bad = len(text[pos:]) - len(text[pos:].lstrip()) + pos
            raise ParseError(f"unexpected character {text[bad]!r}", bad)
        kind = m.lastgroup
        out.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, tokens, resolve):
        self.toks = tokens
        self.i = 0
        self.resolve = resolve

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, value):
        t = self.take()
        if t[1] != value:
            raise ParseError(f"expected {value!r}, found {t[1] or 'end of input'!r}", t[2])
        return t

    def expr(self) -> Polynomial:
        acc = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            rhs = self.term()
            acc = acc + rhs if op == "+" else acc - rhs
        return acc

    def _starts_factor(self, t) -> bool:
        return t[0] in ("num", "id") or t[1] == "("

    def term(self) -> Polynomial:
        acc = self.unary()
        while True:
            t = self.peek()
            if t[1] == "*":
                self.take()
                acc = acc * self.unary()
            elif t[1] == "/":
                self.take()
                rhs = self.unary()
                if not rhs.is_constant() or not rhs:
                    raise ParseError("division only by nonzero constants", t[2])
                acc = acc / rhs
            elif self._starts_factor(t):
                # implicit multiplication, e.g. 3r^2 or 2(x+1)
                acc = acc * self.power()
            else:
                return acc

    def unary(self) -> Polynomial:
        t = self.peek()
        if t[1] == "-":
            self.take()
            return -self.unary()
        if t[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Polynomial:
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            t = self.take()
            if t[0] != "num" or not t[1].isdigit():
                raise ParseError("exponent must be a non-negative integer", t[2])
            base = base ** int(t[1])
        return base

    def atom(self) -> Polynomial:
        t = self.take()
        if t[0] == "num":
            return Polynomial.const(Fraction(t[1]))
        if t[0] == "id":
            return Polynomial.var(self.resolve(t[1]))
        if t[1] == "(":
            inner = self.expr()
            self.expect(")")
            return inner
        raise ParseError(f"unexpected {t[1] or 'end of input'!r}", t[2])


def parse_polynomial(text: str, resolve: Callable[[str], Var] | None = None) -> Polynomial:
    """Parse ``3*x^2*y - 1/2``.  ``resolve`` maps identifiers to variables."""
    resolve = resolve or (lambda name: Var(name))
    p = _Parser(tokenize(text), resolve)
    out = p.expr()
    t = p.peek()
    if t[0] != "end":
        raise ParseError(f"unexpected {t[1]!r}", t[2])
    return out


def iter_vars(polys: Iterable[Polynomial]) -> Iterator[Var]:
    seen = set()
    for p in polys:
        for m in p.sorted_terms():
            for v in m[0].variables():
                if v not in seen:
                    seen.add(v)
                    yield v
