"""Command line front end: parse an invariant, search for loops, print them."""

from __future__ import annotations

import argparse
import graphlib
import heapq
import json
import re
import sys
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from .pcp import GuardMode, InvariantSpec, UnknownVariableError
from .polyring import ParseError, Polynomial, Var, VarKind, parse_polynomial, tokenize
from .recurrence import DEFAULT_SHAPES, IntegerPartition, MatrixShape
from .smt import SolverConfig, SolverConfigError
from .synth import SearchMode, SynthesisProblem, SynthesizedLoop, synthesize
from .verify import certificate

SCHEMA_VERSION = 1

EXIT_OK, EXIT_EXHAUSTED, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2, 3

_INITIAL = re.compile(r"^([A-Za-z][A-Za-z0-9_]*?)0$")


@dataclass(frozen=True)
class InvariantSource:
    text: str
    declared_vars: tuple[str, ...] | None = None
    declared_params: tuple[str, ...] | None = None


def _split(text: str) -> list[tuple[int, int, int]]:
    """``(start, eq, end)`` offsets of every conjunct ``lhs == rhs``."""
    toks = tokenize(text)
    out = []
    start, eq = 0, None
    for kind, value, pos in toks:
        if value == "==":
            if eq is not None:
                raise ParseError("a conjunct may contain only one '=='", pos)
            eq = pos
        elif value == "&&" or kind == "end":
            if eq is None:
                raise ParseError("expected 'lhs == rhs'", pos)
            out.append((start, eq, pos))
            start, eq = pos + len(value), None
    return out


def _side(text: str, lo: int, hi: int, resolve) -> Polynomial:
    chunk = text[lo:hi]
    if not chunk.strip():
        raise ParseError("empty side of an equality", lo)
    try:
        return parse_polynomial(chunk, resolve)
    except ParseError as exc:
        raise ParseError(str(exc).split(" (at ")[0], lo + exc.position) from None


def parse_invariant(src: InvariantSource) -> InvariantSpec:
    """Turn ``lhs == rhs && ...`` into an :class:`InvariantSpec`.

    ``v0`` names the initial value of ``v`` if ``v`` is a program variable or
    ``v0`` is a declared parameter.  Without declared parameters every
    initial value is a parameter.
    """
    text = src.text
    pieces = _split(text)
    idents = []
    for kind, value, _ in tokenize(text):
        if kind == "id" and value not in idents:
            idents.append(value)
    declared_params = set(src.declared_params or ())
    if src.declared_vars is not None:
        program = list(src.declared_vars)
        if len(set(program)) != len(program):
            raise ValueError("duplicate names in the variable list")
    else:
        program = [n for n in idents if not _is_initial(n, idents, declared_params)]
    for p in sorted(declared_params):
        m = _INITIAL.match(p)
        if not m:
            raise ValueError(f"parameter {p!r} is not of the form <var>0")
        if m.group(1) not in program:
            program.append(m.group(1))

    prog_vars = {n: Var(n, VarKind.PROGRAM) for n in program}
    initial: dict[Var, Var] = {}
    table: dict[str, Var] = dict(prog_vars)
    for n in idents:
        if n in table:
            continue
        m = _INITIAL.match(n)
        if m and m.group(1) in prog_vars:
            y = Var(n, VarKind.INITIAL)
            initial[prog_vars[m.group(1)]] = y
            table[n] = y
        else:
            raise UnknownVariableError(f"identifier {n!r} is not a declared variable")
    for p in declared_params:
        if p not in table:
            y = Var(p, VarKind.INITIAL)
            initial[prog_vars[p[:-1]]] = y
            table[p] = y

    polys = []
    for start, eq, end in pieces:
        lhs = _side(text, start, eq, table.__getitem__)
        rhs = _side(text, eq + 2, end, table.__getitem__)
        if not (lhs.variables() | rhs.variables()):
            raise ParseError("equality without variables", start + len(text[start:eq]) - len(text[start:eq].lstrip()))
        polys.append(lhs - rhs)

    if src.declared_params is None:
        params = tuple(initial[v] for v in prog_vars.values() if v in initial)
    else:
        params = tuple(table[p] for p in src.declared_params)
    return InvariantSpec(tuple(polys), tuple(prog_vars.values()), initial, params)


def _is_initial(name: str, idents: Sequence[str], declared_params) -> bool:
    m = _INITIAL.match(name)
    return bool(m) and (m.group(1) in idents or name in declared_params)


def format_invariant(spec: InvariantSpec) -> str:
    """Canonical text; ``parse_invariant`` reads it back to the same spec."""
    return " && ".join(f"{p} == 0" for p in spec.polys)


def source_for(spec: InvariantSpec) -> InvariantSource:
    return InvariantSource(format_invariant(spec), tuple(v.name for v in spec.program_vars),
                           tuple(p.name for p in spec.params))


# ---------------------------------------------------------------------------
# rendering


def _fmt(x) -> str:
    if isinstance(x, Fraction):
        return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
    return str(x)


def _rhs(loop: SynthesizedLoop, i: int) -> str:
    """Row ``i`` of ``B`` as an expression; the aux variable reads as the constant 1."""
    row = loop.B[i]
    terms = []
    for j in [i] + [j for j in range(len(loop.vars)) if j != i]:
        c = row[j]
        if isinstance(c, Fraction) and not c:
            continue
        terms.append((c, None if loop.vars[j] == loop.aux else loop.vars[j].name))
    terms.sort(key=lambda t: t[1] is None)      # constant last
    if not terms:
        return "0"
    out = ""
    for k, (c, name) in enumerate(terms):
        neg = isinstance(c, Fraction) and c < 0
        mag = -c if neg else c
        body = _fmt(mag) if name is None else _term(mag, name)
        if k == 0:
            out = f"-{body}" if neg else body
        else:
            out += f" - {body}" if neg else f" + {body}"
    return out


def _term(c, name: str) -> str:
    if isinstance(c, Fraction):
        if c == 1:
            return name
        if c == -1:
            return f"-{name}"
        return f"{_fmt(c)}*{name}"
    return f"({c})*{name}"


def _init(loop: SynthesizedLoop, i: int) -> str:
    x = loop.X0[i]
    return str(x) if isinstance(x, Polynomial) else _fmt(x)


def _reads(loop: SynthesizedLoop, i: int) -> set[int]:
    return {j for j, c in enumerate(loop.B[i])
            if j != i and loop.vars[j] != loop.aux and (not isinstance(c, Fraction) or c)}


def sequential_order(loop: SynthesizedLoop) -> list[int] | None:
    """Row order in which in-place updates equal the simultaneous update.

    A row may only be assigned while every other variable it reads still holds
    its old value, so it has to come before all of them.  ``None`` on a cycle.
    """
    rows = [i for i, v in enumerate(loop.vars) if v != loop.aux]
    ts = graphlib.TopologicalSorter()
    for i in rows:
        ts.add(i)
        for j in _reads(loop, i):
            ts.add(j, i)       # j after i
    try:
        ts.prepare()
    except graphlib.CycleError:
        return None
    # smallest ready row first keeps the declared order wherever it is allowed
    order, pool = [], []
    while ts.is_active():
        for i in ts.get_ready():
            heapq.heappush(pool, i)
        i = heapq.heappop(pool)
        order.append(i)
        ts.done(i)
    return order


def render_loop(loop: SynthesizedLoop, style: str = "simultaneous") -> str:
    if style not in ("simultaneous", "sequential"):
        raise ValueError(f"unknown style {style!r}")
    rows = [i for i, v in enumerate(loop.vars) if v != loop.aux]
    names = ", ".join(loop.vars[i].name for i in rows)
    lines = [f"({names}) ← ({', '.join(_init(loop, i) for i in rows)})", "while true do"]
    note = None
    order = sequential_order(loop) if style == "sequential" else None
    if style == "sequential" and order is None:
        note = "note: updates are mutually dependent, shown as one simultaneous assignment"
    if order is not None:
        for i in order:
            lines.append(f"  {loop.vars[i].name} ← {_rhs(loop, i)}")
    else:
        lines.append(f"  ({names}) ← ({', '.join(_rhs(loop, i) for i in rows)})")
    lines.append("end")
    if note:
        lines.append(f"# {note}")
    return "\n".join(lines)


def verdict(loop: SynthesizedLoop) -> str:
    if loop.verified == "oracle-verified":
        v = loop.verification
        extra = f", parameter grid {loop.grid.status}" if loop.grid is not None else ""
        return (f"verified: {v.status} (order bound {v.bound}, "
                f"checked n = 0..{v.n_checked}{extra})")
    if loop.verified == "unverified-algebraic":
        return "UNVERIFIED: algebraic entries, the exact oracle cannot run"
    return "UNVERIFIED: verification disabled"


# ---------------------------------------------------------------------------
# argument handling


def _names(text: str | None) -> tuple[str, ...] | None:
    if text is None:
        return None
    return tuple(n for n in re.split(r"[,\s]+", text.strip()) if n)


def _shapes(text: str) -> tuple[MatrixShape, ...]:
    if text == "auto":
        return DEFAULT_SHAPES
    return tuple(MatrixShape.parse(t) for t in text.split(","))


def _partition(text: str) -> IntegerPartition:
    try:
        parts = tuple(sorted((int(t) for t in text.split(",")), reverse=True))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad partition {text!r}") from None
    try:
        return IntegerPartition(parts)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="loopsynth",
                                 description="Synthesize loops from polynomial invariants.")
    src = ap.add_mutually_exclusive_group(required=True)
    src.add_argument("--invariant", help="conjunction such as 'x == 2*y && ...'")
    src.add_argument("--invariant-file", help="file holding the invariant text")
    ap.add_argument("--vars", help="program variables in template order (comma separated)")
    ap.add_argument("--params", help="initial values kept symbolic, e.g. 'x0,y0' ('' for none)")
    ap.add_argument("--size", type=int, help="recurrence size s (default: variables + 1)")
    ap.add_argument("--shape", default="auto",
                    help="full, upper, unitriangular, a comma list, or auto (cheapest first)")
    ap.add_argument("--partition", type=_partition, action="append",
                    help="only try this root multiplicity partition, e.g. 1,1 (repeatable)")
    ap.add_argument("--solver", default=None, help="z3, yices, cvc5 or generic-smtlib")
    ap.add_argument("--solver-path", help="solver binary")
    ap.add_argument("--config", help="JSON solver config file")
    ap.add_argument("--timeout-ms", type=int, help="per-configuration solver timeout (default 60000)")
    ap.add_argument("--global-timeout-s", type=float, help="budget for the whole search")
    ap.add_argument("--search", default="first", help="first, all:<N> or exhaustive")
    ap.add_argument("--guard", default="all", choices=["all", "any", "none"],
                    help="forbid constant sequences for every / some / no invariant variable")
    ap.add_argument("--dump-smt", metavar="DIR", help="write every SMT-LIB query to DIR")
    ap.add_argument("--json", metavar="FILE", help="write the machine-readable report")
    ap.add_argument("--verify-iters", type=int, default=0,
                    help="unroll at least this many iterations (the order bound is always met)")
    ap.add_argument("--allow-algebraic", action="store_true",
                    help="report loops with irrational entries (unverified)")
    ap.add_argument("--no-aux", action="store_true", help="do not add the constant-1 variable")
    ap.add_argument("--jobs", type=int, default=1, help="configurations solved in parallel")
    ap.add_argument("--seed-order", default="enumerate", choices=["fixed", "enumerate"],
                    help="keep the given variable order or enumerate permutations")
    ap.add_argument("--permutation-budget", type=int, help="maximum variable orders per shape")
    ap.add_argument("--style", default="simultaneous", choices=["simultaneous", "sequential"])
    return ap


def _problem(args) -> SynthesisProblem:
    text = args.invariant
    if text is None:
        text = Path(args.invariant_file).read_text()
    params = _names(args.params)
    spec = parse_invariant(InvariantSource(text.strip(), _names(args.vars), params))
    cfg = SolverConfig.load(args.config, solver_kind=args.solver, binary_path=args.solver_path,
                            timeout=args.timeout_ms)
    return SynthesisProblem(
        spec, size=args.size, shapes=_shapes(args.shape), guard_mode=GuardMode.parse(args.guard),
        solver_cfg=cfg, search=SearchMode.parse(args.search),
        permutation_budget=args.permutation_budget, seed_order=args.seed_order,
        aux=False if args.no_aux else None,
        partitions=tuple(args.partition) if args.partition else None,
        allow_algebraic=args.allow_algebraic, verify_iters=args.verify_iters, jobs=args.jobs,
        dump_smt=args.dump_smt, global_timeout=args.global_timeout_s)


def run(argv: Sequence[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        problem = _problem(args)
    except SolverConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        text = args.invariant or ""
        if text and exc.position <= len(text):
            print(f"  {text}\n  {' ' * exc.position}^", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        result = synthesize(problem)
    except SolverConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    rows = result.report.rows
    for k, loop in enumerate(result.loops, 1):
        print(f"solution {k}: {loop.config.label()}", file=out)
        print(render_loop(loop, args.style), file=out)
        print(verdict(loop), file=out)
        if loop.verification is not None:
            print(f"certificate: sha256 {loop.verification.trace[-1][:16]}", file=out)
        print(file=out)
    print(f"search: {len(rows)} of {result.report.configurations} configurations tried "
          f"in {result.report.elapsed:.2f}s", file=out)
    for r in rows:
        print(f"  [{r.index}] {r.shape:<19} {r.partition:<11} {r.permutation:<20} "
              f"{r.status:<14} c={r.constraints:<4} d={r.max_degree:<3} {r.solve_time:.2f}s", file=out)

    if args.json:
        doc = {"schema_version": SCHEMA_VERSION,
               "report": result.report.to_dict(),
               "solutions": [_solution_record(problem, lp) for lp in result.loops]}
        Path(args.json).write_text(json.dumps(doc, indent=2))

    if any(lp.verified == "oracle-verified" for lp in result.loops):
        return EXIT_OK
    if rows and all(r.status == "solver-error" for r in rows):
        print("error: the solver failed on every configuration", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_EXHAUSTED


def _solution_record(problem: SynthesisProblem, loop: SynthesizedLoop) -> dict:
    d = loop.to_dict()
    d["rendered"] = render_loop(loop)
    if loop.verification is not None:
        d["certificate"] = certificate(loop.concrete(), problem.spec, loop.verification)
    return d


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
