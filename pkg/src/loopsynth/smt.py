"""SMT-LIB 2 (QF_NRA) encoding and an external solver driver.

One fresh solver process per clause set.  Models come back as exact
rationals where possible; irrational algebraic values are kept as opaque text
with a float approximation and never rounded into the rational world.
"""

from __future__ import annotations

import json
import os
import re
import shutil
import signal
import subprocess
import threading
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Union

import numpy as np

from .pcp import ClauseSet, Constraint, Rel
from .polyring import Polynomial, Var
from .recurrence import RecurrenceTemplate

ENV_SOLVER_PATH = "LOOPSYNTH_SOLVER_PATH"
ENV_CONFIG = "LOOPSYNTH_CONFIG"

DEFAULT_BINARIES = {"z3": "z3", "yices": "yices-smt2", "cvc5": "cvc5", "generic-smtlib": None}


class SolverConfigError(RuntimeError):
    """The solver could not be located or configured."""


class IncompleteModelError(ValueError):
    pass


@dataclass
class SolverConfig:
    solver_kind: str = "z3"
    binary_path: str | None = None
    timeout: int = 60_000   # milliseconds
    extra_args: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.solver_kind not in DEFAULT_BINARIES:
            raise SolverConfigError(f"unknown solver kind {self.solver_kind!r}")
        if self.timeout <= 0:
            raise SolverConfigError("timeout must be positive")

    @classmethod
    def load(cls, path: str | os.PathLike | None = None, **overrides) -> "SolverConfig":
        """Defaults, then the JSON config file (``path`` or ``$LOOPSYNTH_CONFIG``), then overrides."""
        data: dict = {}
        path = path or os.environ.get(ENV_CONFIG)
        if path:
            try:
                raw = json.loads(Path(path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise SolverConfigError(f"cannot read solver config {path}: {exc}") from exc
            keys = {"solver": "solver_kind", "solver_kind": "solver_kind", "solver_path": "binary_path",
                    "binary_path": "binary_path", "timeout_ms": "timeout", "extra_args": "extra_args"}
            for k, v in raw.items():
                if k not in keys:
                    raise SolverConfigError(f"unknown config key {k!r}")
                data[keys[k]] = v
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)

    def resolve_binary(self) -> str:
        path = self.binary_path or os.environ.get(ENV_SOLVER_PATH) or DEFAULT_BINARIES[self.solver_kind]
        if not path:
            raise SolverConfigError("generic-smtlib solver needs an explicit binary path")
        found = shutil.which(path)
        if not found:
            raise SolverConfigError(f"solver binary {path!r} not found")
        return found

    def command(self) -> list[str]:
        binary = self.resolve_binary()
        base = {"z3": [binary, "-in", "-smt2"],
                "yices": [binary],
                "cvc5": [binary, "--lang=smt2", "--produce-models"],
                "generic-smtlib": [binary]}[self.solver_kind]
        return base + list(self.extra_args)


@dataclass(frozen=True)
class AlgebraicOpaque:
    text: str
    approx: float | None = None

    def __str__(self):
        return f"~{self.approx:.6g}" if self.approx is not None else self.text


ModelValue = Union[Fraction, AlgebraicOpaque]


@dataclass
class Model:
    assignments: dict[Var, ModelValue]

    def is_rational(self, vars=None) -> bool:
        vars = self.assignments if vars is None else vars
        return all(isinstance(self.assignments[v], Fraction) for v in vars)

    def rational_part(self) -> dict[Var, Fraction]:
        return {v: x for v, x in self.assignments.items() if isinstance(x, Fraction)}

    def __getitem__(self, v: Var) -> ModelValue:
        return self.assignments[v]


@dataclass
class SolveOutcome:
    status: str              # sat | unsat | unknown | timeout | solver-error
    model: Model | None = None
    message: str = ""
    elapsed: float = 0.0

    @property
    def sat(self) -> bool:
        return self.status == "sat"


# ---------------------------------------------------------------------------
# encoding


def _num(c: Fraction) -> str:
    a = abs(c)
    body = f"{a.numerator}.0" if a.denominator == 1 else f"(/ {a.numerator}.0 {a.denominator}.0)"
    return f"(- {body})" if c < 0 else body


def _term(p: Polynomial, names: Mapping[Var, str]) -> str:
    if not p.terms:
        return "0.0"
    parts = []
    for m, c in p.sorted_terms():
        factors = [names[v] for v, e in m.powers for _ in range(e)]
        if not factors:
            parts.append(_num(c))
        elif c == 1:
            parts.append(factors[0] if len(factors) == 1 else f"(* {' '.join(factors)})")
        else:
            parts.append(f"(* {_num(c)} {' '.join(factors)})")
    return parts[0] if len(parts) == 1 else f"(+ {' '.join(parts)})"


def _atom(c: Constraint, names) -> str:
    eq = f"(= {_term(c.poly, names)} 0.0)"
    return eq if c.rel is Rel.EQ else f"(not {eq})"


def symbol_names(cs: ClauseSet) -> dict[Var, str]:
    names = {}
    used = set()
    for v in cs.free_vars:
        name = v.name if re.fullmatch(r"[A-Za-z][A-Za-z0-9_.]*", v.name) else f"|{v.name}|"
        if name in used:
            raise ValueError(f"duplicate symbol name {name} in clause set")
        used.add(name)
        names[v] = name
    return names


def encode(cs: ClauseSet) -> str:
    names = symbol_names(cs)
    lines = ["(set-option :produce-models true)", "(set-logic QF_NRA)"]
    lines += [f"(declare-const {names[v]} Real)" for v in cs.free_vars]
    for cl in cs:
        atoms = [_atom(c, names) for c in cl.disjuncts]
        lines.append(f"(assert {atoms[0]})" if len(atoms) == 1 else f"(assert (or {' '.join(atoms)}))")
    lines += ["(check-sat)", "(get-model)", "(exit)"]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# output parsing


class _ParseFailure(ValueError):
    pass


def parse_sexprs(text: str) -> list:
    tokens = re.findall(r'\(|\)|"(?:[^"]|"")*"|\|[^|]*\||[^\s()]+', text)
    stack: list[list] = [[]]
    for tok in tokens:
        if tok == "(":
            stack.append([])
        elif tok == ")":
            if len(stack) == 1:
                raise _ParseFailure("unbalanced parenthesis")
            done = stack.pop()
            stack[-1].append(done)
        else:
            stack[-1].append(tok)
    if len(stack) != 1:
        raise _ParseFailure("unbalanced parenthesis")
    return stack[0]


def _to_text(sx) -> str:
    return sx if isinstance(sx, str) else "(" + " ".join(_to_text(x) for x in sx) + ")"


_RATIONAL_TOKEN = re.compile(r"-?\d+(\.\d+)?(/\d+)?")


def _eval_value(sx) -> ModelValue:
    if isinstance(sx, str):
        if _RATIONAL_TOKEN.fullmatch(sx):
            return Fraction(sx)
        raise _ParseFailure(f"unexpected value token {sx!r}")
    if not sx:
        raise _ParseFailure("empty value")
    head, args = sx[0], sx[1:]
    if head == "root-obj":
        return AlgebraicOpaque(_to_text(sx), _root_obj_approx(args))
    if head == "_" or head in ("root", "algebraic"):
        return AlgebraicOpaque(_to_text(sx), None)
    vals = [_eval_value(a) for a in args]
    if any(isinstance(v, AlgebraicOpaque) for v in vals):
        return AlgebraicOpaque(_to_text(sx), None)
    if head == "-":
        return -vals[0] if len(vals) == 1 else vals[0] - sum(vals[1:])
    if head == "+":
        return sum(vals, Fraction(0))
    if head == "*":
        out = Fraction(1)
        for v in vals:
            out *= v
        return out
    if head == "/":
        out = vals[0]
        for v in vals[1:]:
            out /= v
        return out
    raise _ParseFailure(f"unsupported value operator {head!r}")


def _univariate(sx) -> dict[int, Fraction]:
    """Coefficients of a z3 ``root-obj`` polynomial in ``x``."""
    if isinstance(sx, str):
        if _RATIONAL_TOKEN.fullmatch(sx):
            return {0: Fraction(sx)}
        return {1: Fraction(1)}
    head, args = sx[0], [_univariate(a) for a in sx[1:]]

    def add(p, q, sign=1):
        out = dict(p)
        for k, v in q.items():
            out[k] = out.get(k, 0) + sign * v
        return out

    def mul(p, q):
        out: dict[int, Fraction] = {}
        for i, a in p.items():
            for j, b in q.items():
                out[i + j] = out.get(i + j, 0) + a * b
        return out

    if head == "+":
        out: dict[int, Fraction] = {}
        for a in args:
            out = add(out, a)
        return out
    if head == "-":
        if len(args) == 1:
            return {k: -v for k, v in args[0].items()}
        out = args[0]
        for a in args[1:]:
            out = add(out, a, -1)
        return out
    if head == "*":
        out = {0: Fraction(1)}
        for a in args:
            out = mul(out, a)
        return out
    if head == "^":
        k = int(next(iter(args[1].values())))
        out = {0: Fraction(1)}
        for _ in range(k):
            out = mul(out, args[0])
        return out
    if head == "/":
        d = next(iter(args[1].values()))
        return {k: v / d for k, v in args[0].items()}
    raise _ParseFailure(f"unsupported root-obj operator {head!r}")


def _root_obj_approx(args) -> float | None:
    try:
        coeffs = _univariate(args[0])
        index = int(args[1])
        deg = max(coeffs)
        roots = np.roots([float(coeffs.get(k, 0)) for k in range(deg, -1, -1)])
        real = sorted(r.real for r in roots if abs(r.imag) < 1e-9)
        return float(real[index - 1])
    except (_ParseFailure, ValueError, IndexError, KeyError, TypeError):
        return None


def parse_model(text: str, kind: str = "z3") -> dict[str, ModelValue]:
    """Parse a ``get-model`` response into ``{symbol: value}``.

    z3 and cvc5 answer with ``define-fun`` forms; yices with ``(= x v)`` lines.
    """
    values: dict[str, ModelValue] = {}
    for sx in parse_sexprs(text):
        entries = sx if isinstance(sx, list) else []
        if entries and entries[0] == "model":
            entries = entries[1:]
        if entries and isinstance(entries[0], str):
            entries = [entries]
        for e in entries:
            if not isinstance(e, list) or not e:
                continue
            if e[0] == "define-fun" and len(e) == 5:
                if e[2]:
                    continue    # helper functions such as z3's division stubs
                values[e[1].strip("|")] = _eval_value(e[4])
            elif e[0] == "=" and len(e) == 3 and isinstance(e[1], str):
                values[e[1].strip("|")] = _eval_value(e[2])
            elif e[0] == "error":
                raise _ParseFailure(_to_text(e))
    return values


def interpret_output(stdout: str, cs: ClauseSet, kind: str = "z3") -> SolveOutcome:
    stripped = stdout.strip()
    if not stripped:
        return SolveOutcome("solver-error", message="empty solver output")
    first, _, rest = stripped.partition("\n")
    first = first.strip()
    if first in ("unsat", "unknown", "timeout"):
        return SolveOutcome(first)
    if first != "sat":
        return SolveOutcome("solver-error", message=stripped[:2000])
    try:
        raw = parse_model(rest, kind)
    except _ParseFailure as exc:
        return SolveOutcome("solver-error", message=f"cannot parse model: {exc}")
    names = symbol_names(cs)
    assignments = {}
    missing = []
    for v, name in names.items():
        key = name.strip("|")
        if key in raw:
            assignments[v] = raw[key]
        else:
            missing.append(key)
    if missing:
        return SolveOutcome("solver-error", message=f"model misses {', '.join(missing)}")
    return SolveOutcome("sat", Model(assignments))


def solve(cs: ClauseSet, cfg: SolverConfig, cancel: threading.Event | None = None,
          dump_path: str | os.PathLike | None = None) -> SolveOutcome:
    """Run one solver process on ``cs``; kill it on timeout or cancellation."""
    text = encode(cs)
    if dump_path is not None:
        Path(dump_path).write_text(text)
    if cs.trivially_unsat:
        return SolveOutcome("unsat", message="statically unsatisfiable")
    cmd = cfg.command()
    start = time.monotonic()
    try:
        proc = subprocess.Popen(cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                stderr=subprocess.PIPE, text=True, start_new_session=True)
    except OSError as exc:
        raise SolverConfigError(f"cannot start solver {cmd[0]}: {exc}") from exc
    result: list = []
    reader = threading.Thread(target=lambda: result.append(proc.communicate(text)), daemon=True)
    reader.start()
    deadline = start + cfg.timeout / 1000
    status = None
    while reader.is_alive():
        reader.join(0.02)
        if not reader.is_alive():
            break
        if time.monotonic() > deadline:
            status = "timeout"
        elif cancel is not None and cancel.is_set():
            status = "cancelled"
        if status:
            _kill_group(proc)
            reader.join()
            break
    elapsed = time.monotonic() - start
    if status == "timeout":
        return SolveOutcome("timeout", elapsed=elapsed)
    if status == "cancelled":
        return SolveOutcome("unknown", message="cancelled", elapsed=elapsed)
    stdout, stderr = result[0] if result else ("", "")
    outcome = interpret_output(stdout, cs, cfg.solver_kind)
    if outcome.status == "solver-error" and stderr:
        outcome.message += f"\n{stderr.strip()[:2000]}"
    outcome.elapsed = elapsed
    return outcome


def _kill_group(proc: subprocess.Popen) -> None:
    # wrapper scripts leave children holding the pipes, so kill the whole group
    try:
        os.killpg(proc.pid, signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        proc.kill()


# ---------------------------------------------------------------------------
# model -> loop


@dataclass
class ExtractedLoop:
    A: list[list[ModelValue]]
    B: list[list[ModelValue]]
    algebraic: dict[str, AlgebraicOpaque]

    @property
    def is_rational(self) -> bool:
        return not self.algebraic


def _instantiate(p: Polynomial, model: Model, where: str, algebraic: dict) -> ModelValue:
    vs = p.variables()
    missing = [v.name for v in vs if v not in model.assignments]
    if missing:
        raise IncompleteModelError(f"model has no value for {', '.join(missing)}")
    if all(isinstance(model[v], Fraction) for v in vs):
        return p.evaluate(model.assignments)
    if len(p.terms) == 1 and len(vs) == 1 and p.terms.get(next(iter(p.terms))) == 1 \
            and next(iter(p.terms)).degree == 1:
        val = model[next(iter(vs))]
    else:
        val = AlgebraicOpaque(str(p))
    algebraic[where] = val
    return val


def extract_loop(model: Model, rt: RecurrenceTemplate) -> ExtractedLoop:
    algebraic: dict[str, AlgebraicOpaque] = {}
    A = [[_instantiate(rt.A[i, j], model, _entry_name(rt.A[i, j], f"A[{i + 1},{j + 1}]"), algebraic)
          for j in range(rt.A.cols)] for i in range(rt.A.rows)]
    B = [[_instantiate(rt.B[i, j], model, _entry_name(rt.B[i, j], f"B[{i + 1},{j + 1}]"), algebraic)
          for j in range(rt.B.cols)] for i in range(rt.B.rows)]
    return ExtractedLoop(A, B, algebraic)


def _entry_name(p: Polynomial, fallback: str) -> str:
    vs = p.variables()
    return next(iter(vs)).name if len(vs) == 1 else fallback
