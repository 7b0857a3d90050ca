import random
import shutil
import time
from fractions import Fraction

import pytest

from loopsynth.cli import InvariantSource, parse_invariant
from loopsynth.polyring import PolyMatrix, Polynomial

HAVE_Z3 = shutil.which("z3") is not None

_skip_without_z3 = pytest.mark.skipif(not HAVE_Z3, reason="z3 binary not on PATH")


def requires_solver(fn):
    """Mark a test as solver-backed (``-m "not solver"`` deselects it)."""
    return pytest.mark.solver(_skip_without_z3(fn))


def spec(text, vars=None, params=None):
    return parse_invariant(InvariantSource(text, tuple(vars) if vars is not None else None,
                                           tuple(params) if params is not None else None))


def random_rational(rng: random.Random, span=5) -> Fraction:
    return Fraction(rng.randint(-span, span), rng.randint(1, 3))


def random_matrix(rng: random.Random, n: int) -> PolyMatrix:
    return PolyMatrix(n, n, [Polynomial.const(random_rational(rng)) for _ in range(n * n)])


def random_poly(rng: random.Random, vars, terms=4, max_exp=3) -> Polynomial:
    p = Polynomial()
    for _ in range(terms):
        t = Polynomial.const(random_rational(rng))
        for v in vars:
            t = t * Polynomial.var(v) ** rng.randint(0, max_exp)
        p = p + t
    return p


@pytest.fixture
def rng():
    return random.Random(20240611)


# -- acceptance summary: one line per criterion, printed after the run

ACCEPTANCE: dict[int, tuple[str, str, float]] = {}


class criterion:
    """Record the outcome of one acceptance criterion; exceptions still propagate."""

    def __init__(self, number: int, title: str):
        self.number, self.title = number, title
        self.detail = ""

    def __enter__(self):
        self.start = time.monotonic()
        return self

    def __exit__(self, exc_type, exc, tb):
        verdict = "PASS" if exc_type is None else "FAIL"
        if exc_type is not None and not self.detail:
            self.detail = str(exc).splitlines()[0] if str(exc) else exc_type.__name__
        ACCEPTANCE[self.number] = (verdict, f"{self.title}; {self.detail}" if self.detail else self.title,
                                   time.monotonic() - self.start)
        return False


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        verdict, text, secs = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {verdict} ({secs:.1f}s) {text}")
