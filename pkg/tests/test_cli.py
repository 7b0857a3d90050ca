import io
import json
from fractions import Fraction

import pytest

from loopsynth.cli import (SCHEMA_VERSION, format_invariant, parse_invariant,
                           render_loop, run, sequential_order, source_for, verdict)
from loopsynth.pcp import UnknownVariableError
from loopsynth.polyring import ParseError, Polynomial, Var, VarKind, parse_polynomial
from loopsynth.recurrence import IntegerPartition, MatrixShape
from loopsynth.synth import Configuration, SynthesizedLoop

from conftest import requires_solver, spec


def poly(sp, text):
    names = {v.name: v for v in sp.program_vars}
    names.update({y.name: y for y in sp.initial_vars.values()})
    return parse_polynomial(text, names.__getitem__)


def test_parse_eucliddiv():
    sp = spec("x0 == y0*q + r", params=["x0", "y0"])
    assert [v.name for v in sp.program_vars] == ["q", "r", "x", "y"]
    assert [p.name for p in sp.params] == ["x0", "y0"]
    assert all(p.kind is VarKind.INITIAL for p in sp.params)
    assert sp.polys == (poly(sp, "x0 - y0*q - r"),)


def test_parse_square_and_sum1():
    sp = spec("a == b^2")
    assert sp.polys == (poly(sp, "a - b^2"),)
    assert sp.params == ()
    sp = spec("1+2a == c && 4b == (c-1)^2")
    assert len(sp.polys) == 2
    assert sp.polys[1] == poly(sp, "4*b - c^2 + 2*c - 1")


def test_initial_value_convention():
    # x0 is an ordinary variable unless x is a program variable
    sp = spec("x0 == 2*y")
    assert {v.name for v in sp.program_vars} == {"x0", "y"}
    sp = spec("x0 == y + x")
    assert sp.initial_vars[Var("x")].name == "x0"
    assert [p.name for p in sp.params] == ["x0"]
    sp = spec("x0 == y + x", params=[])
    assert sp.params == ()
    # a declared parameter brings in its base variable
    sp = spec("a0 + r == r^2 + 2*y", vars=["y", "r"], params=["a0"])
    assert [v.name for v in sp.program_vars] == ["y", "r", "a"]


def test_declared_vars_and_unknown_identifiers():
    sp = spec("x == 2*y", vars=["y", "x"])
    assert [v.name for v in sp.program_vars] == ["y", "x"]
    with pytest.raises(UnknownVariableError):
        spec("x == 2*z", vars=["x", "y"])
    with pytest.raises(ValueError):
        spec("x == y", vars=["x", "x"])
    with pytest.raises(ValueError):
        spec("x == y", params=["z"])


def test_parse_errors_have_positions():
    with pytest.raises(ParseError) as e:
        spec("x == 2*y && y == $")
    assert e.value.position == 17
    with pytest.raises(ParseError):
        spec("x + y")
    with pytest.raises(ParseError):
        spec("x == y == z")
    with pytest.raises(ParseError) as e:
        spec("x == y && 1 == 2")
    assert e.value.position == 10
    with pytest.raises(ParseError):
        spec("x == ")


@pytest.mark.parametrize("text,params", [
    ("x0 == y0*q + r", ["x0", "y0"]),
    ("1+2a == c && 4b == (c-1)^2", None),
    ("1/4 + 3*r^2 == s && 1 + 4*a0 + 6*r^2 == 3*r + 4*r^3 + 4*x", ["a0"]),
])
def test_round_trip(text, params):
    sp = spec(text, params=params)
    again = parse_invariant(source_for(sp))
    assert again == sp
    assert format_invariant(again) == format_invariant(sp)


# -- rendering


def make_loop(names, B, x0, aux=None, shape=MatrixShape.UPPER):
    vars = tuple(Var(n) for n in names)
    aux_var = vars[names.index(aux)] if aux else None
    cfg = Configuration(0, shape, IntegerPartition((len(names),)), vars)
    return SynthesizedLoop(cfg, vars, (), [[Fraction(x) for x in r] for r in B],
                           tuple(Polynomial.const(Fraction(x)) for x in x0), [("1", len(names))],
                           "unverified-by-flag", aux=aux_var)


CUBES_LOOP = (["c", "k", "m", "n", "one"],
         [[1, 1, 0, 0, 0], [0, 1, 1, 0, 0], [0, 0, 1, 0, 6], [0, 0, 0, 1, 1], [0, 0, 0, 0, 1]],
         [0, 1, 6, 0, 1])


def test_render_cubes_sequential():
    lp = make_loop(*CUBES_LOOP, aux="one")
    assert render_loop(lp, "sequential") == "\n".join([
        "(c, k, m, n) ← (0, 1, 6, 0)",
        "while true do",
        "  c ← c + k",
        "  k ← k + m",
        "  m ← m + 6",
        "  n ← n + 1",
        "end"])


def test_render_simultaneous():
    lp = make_loop(*CUBES_LOOP, aux="one")
    assert render_loop(lp).splitlines()[2] == "  (c, k, m, n) ← (c + k, k + m, m + 6, n + 1)"


def test_sequential_order_respects_reads():
    # y reads x, so y must be assigned first
    lp = make_loop(["x", "y"], [[1, 0], [1, 1]], [0, 1])
    assert sequential_order(lp) == [1, 0]


def test_render_identity():
    lp = make_loop(["x", "y"], [[1, 0], [0, 1]], [3, 4])
    body = render_loop(lp, "sequential").splitlines()[2:4]
    assert body == ["  x ← x", "  y ← y"]


def test_render_mutual_dependence_falls_back():
    lp = make_loop(["x", "y"], [[0, 1], [1, 0]], [1, 2], shape=MatrixShape.FULL)
    text = render_loop(lp, "sequential")
    assert "  (x, y) ← (y, x)" in text
    assert text.splitlines()[-1].startswith("# note:")
    with pytest.raises(ValueError):
        render_loop(lp, "pretty")


def test_render_coefficients_and_fractions():
    lp = make_loop(["x", "y", "one"], [[-1, Fraction(1, 2), -3], [0, 2, 0], [0, 0, 1]],
                   [Fraction(1, 4), 0, 1], aux="one")
    text = render_loop(lp)
    assert "(x, y) ← (1/4, 0)" in text
    assert "(-x + 1/2*y - 3, 2*y)" in text


def test_verdict_labels_unverified():
    lp = make_loop(["x"], [[2]], [1])
    assert verdict(lp).startswith("UNVERIFIED")
    lp.verified = "unverified-algebraic"
    assert "algebraic" in verdict(lp)


# -- the command


def cli(*argv):
    buf = io.StringIO()
    code = run(list(argv), buf)
    return code, buf.getvalue()


def test_usage_errors(capsys):
    assert cli()[0] == 2
    assert cli("--invariant", "x == ")[0] == 2
    assert "^" in capsys.readouterr().err
    assert cli("--invariant", "x == 2*y", "--search", "sometimes")[0] == 2
    assert cli("--invariant", "x == 2*y", "--shape", "lower")[0] == 2
    assert cli("--invariant", "x == 2*y", "--partition", "0,1")[0] == 2
    assert cli("--invariant", "x == 2*y", "--size", "1")[0] == 2
    assert cli("--invariant-file", "/nonexistent/inv.txt")[0] == 2


def test_missing_solver_is_exit_3():
    assert cli("--invariant", "x == 2*y", "--solver-path", "/nonexistent/z3")[0] == 3


def test_solver_failing_everywhere_is_exit_3(tmp_path):
    script = tmp_path / "broken"
    script.write_text("#!/bin/sh\ncat > /dev/null\necho garbage\n")
    script.chmod(0o755)
    code, out = cli("--invariant", "x == 2*y", "--size", "2", "--solver", "generic-smtlib",
                    "--solver-path", str(script), "--shape", "full")
    assert code == 3
    assert "solver-error" in out


@requires_solver
def test_example_run_and_json(tmp_path):
    report = tmp_path / "out.json"
    code, out = cli("--invariant", "x == 2*y", "--size", "2", "--json", str(report))
    assert code == 0
    assert "verified: holds-complete" in out
    assert "certificate: sha256" in out
    doc = json.loads(report.read_text())
    assert doc["schema_version"] == SCHEMA_VERSION
    sol = doc["solutions"][0]
    assert sol["verified"] == "oracle-verified"
    assert sol["certificate"]["status"] == "holds-complete"
    assert doc["report"]["rows"][-1]["status"] == "verified"


@requires_solver
def test_exhausted_is_exit_1():
    code, out = cli("--invariant", "x == 2*y", "--size", "2", "--shape", "unitriangular")
    assert code == 1
    assert "4 of 4 configurations" in out


@requires_solver
def test_square_unitriangular_sequential(tmp_path):
    inv = tmp_path / "square.inv"
    inv.write_text("a == b^2\n")
    code, out = cli("--invariant-file", str(inv), "--shape", "unitriangular", "--style", "sequential",
                    "--dump-smt", str(tmp_path / "smt"))
    assert code == 0
    assert "while true do" in out
    assert list((tmp_path / "smt").iterdir())
