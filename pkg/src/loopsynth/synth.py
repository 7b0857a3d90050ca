"""Search over (shape, partition, variable order) configurations.

Each configuration gets fresh templates, its own clause set and its own solver
process.  A sat model is turned into a concrete loop and only reported as a
solution after the unrolling oracle accepts it.
"""

from __future__ import annotations

import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .pcp import GuardMode, InvariantSpec, assemble
from .polyring import Polynomial, Var, VarKind
from .recurrence import (DEFAULT_SHAPES, IntegerPartition, MatrixShape, build_templates,
                         int_partitions, var_permutations)
from .smt import (AlgebraicOpaque, ModelValue, SolverConfig, extract_loop, solve)
from .verify import (ConcreteLoop, VerificationResult, grid_check, order_bound,
                     unroll_check)

DEFAULT_PERMUTATION_BUDGET = 120


@dataclass(frozen=True)
class SearchMode:
    kind: str              # first | all | exhaustive
    limit: int | None      # maximum number of solutions, None for no limit

    @classmethod
    def parse(cls, text: str) -> "SearchMode":
        if text in ("first", "first-solution"):
            return cls("first", 1)
        if text in ("exhaustive", "exhaustive-configs"):
            return cls("exhaustive", None)
        head, _, count = text.partition(":")
        if head in ("all", "all-up-to") and count.isdigit() and int(count) > 0:
            return cls("all", int(count))
        raise ValueError(f"unknown search mode {text!r} (use first, all:<N> or exhaustive)")

    def __str__(self):
        return f"all:{self.limit}" if self.kind == "all" else self.kind


@dataclass(frozen=True)
class Configuration:
    index: int
    shape: MatrixShape
    partition: IntegerPartition
    order: tuple[Var, ...]          # template rows, aux last

    def label(self) -> str:
        return f"{self.shape.value} {self.partition} ({','.join(v.name for v in self.order)})"


EXHAUSTED = None


@dataclass
class ConfigCursor:
    """Resumable position in the configuration space.

    Shapes are the outer axis, then partitions (descending lexicographic),
    then variable orders (lexicographic in the declared order).  The full
    shape is invariant under reordering, so it only uses the declared order.
    """

    shapes: tuple[MatrixShape, ...]
    size: int
    vars: tuple[Var, ...]                  # permutable rows
    aux: Var | None = None
    permutation_budget: int | None = None
    seed_order: str = "enumerate"
    partitions: tuple[IntegerPartition, ...] | None = None
    position: int = 0

    def __post_init__(self):
        if self.seed_order not in ("fixed", "enumerate"):
            raise ValueError(f"unknown seed order {self.seed_order!r}")
        self._space: list[Configuration] | None = None

    def space(self) -> list[Configuration]:
        if self._space is None:
            self._space = list(_enumerate(self))
        return self._space

    def __len__(self):
        return len(self.space())


def _enumerate(cur: ConfigCursor):
    parts = list(int_partitions(cur.size))
    if cur.partitions is not None:
        wanted = set(cur.partitions)
        parts = [p for p in parts if p in wanted]
    budget = cur.permutation_budget
    if budget is None:
        budget = min(math.factorial(len(cur.vars)), DEFAULT_PERMUTATION_BUDGET)
    tail = (cur.aux,) if cur.aux is not None else ()
    index = 0
    for shape in cur.shapes:
        if shape is MatrixShape.FULL or cur.seed_order == "fixed":
            orders = [tuple(cur.vars)]
        else:
            orders = list(var_permutations(cur.vars, budget))
        for part in parts:
            for order in orders:
                yield Configuration(index, shape, part, tuple(order) + tail)
                index += 1


def next_config(cursor: ConfigCursor) -> Configuration | None:
    """Next configuration, or ``EXHAUSTED``; calling again after that is harmless."""
    space = cursor.space()
    if cursor.position >= len(space):
        return EXHAUSTED
    cfg = space[cursor.position]
    cursor.position += 1
    return cfg


# ---------------------------------------------------------------------------
# problem and results


@dataclass
class SynthesisProblem:
    spec: InvariantSpec
    size: int | None = None
    shapes: tuple[MatrixShape, ...] = DEFAULT_SHAPES
    guard_mode: GuardMode = GuardMode.ALL
    solver_cfg: SolverConfig = field(default_factory=SolverConfig)
    search: SearchMode = field(default_factory=lambda: SearchMode("first", 1))
    permutation_budget: int | None = None
    seed_order: str = "enumerate"
    aux: bool | None = None        # None: add the constant row whenever size allows
    partitions: tuple[IntegerPartition, ...] | None = None
    allow_algebraic: bool = False
    verify: bool = True
    verify_iters: int = 0          # lower bound on unrolled iterations
    jobs: int = 1
    dump_smt: str | None = None
    global_timeout: float | None = None   # seconds over the whole search

    def __post_init__(self):
        if isinstance(self.search, str):
            self.search = SearchMode.parse(self.search)
        if self.jobs < 1:
            raise ValueError("jobs must be positive")
        if self.verify_iters < 0:
            raise ValueError("verify_iters must be non-negative")
        n = len(self.spec.program_vars)
        if self.size is None:
            self.size = n + (0 if self.aux is False else 1)
        if self.aux is None:
            self.aux = self.size > n
        need = n + (1 if self.aux else 0)
        if self.size < max(need, 1):
            raise ValueError(f"size {self.size} is too small for {need} variables")

    @property
    def params(self) -> tuple[Var, ...]:
        return self.spec.params

    def layout(self) -> tuple[tuple[Var, ...], Var | None]:
        """Permutable rows (program vars, then fillers) and the aux row."""
        taken = {v.name for v in self.spec.program_vars} | {y.name for y in self.spec.initial_vars.values()}
        aux = None
        if self.aux:
            name = "one"
            while name in taken:
                name += "_"
            aux = Var(name, VarKind.PROGRAM)
            taken.add(name)
        rows = list(self.spec.program_vars)
        k = 1
        while len(rows) + (1 if aux else 0) < self.size:
            while f"h{k}" in taken:
                k += 1
            rows.append(Var(f"h{k}", VarKind.PROGRAM))
            taken.add(f"h{k}")
        return tuple(rows), aux

    def cursor(self) -> ConfigCursor:
        rows, aux = self.layout()
        return ConfigCursor(tuple(self.shapes), self.size, rows, aux, self.permutation_budget,
                            self.seed_order, self.partitions)

    def echo(self) -> dict:
        return {
            "invariant": [str(p) for p in self.spec.polys],
            "program_vars": [v.name for v in self.spec.program_vars],
            "params": [p.name for p in self.params],
            "size": self.size,
            "shapes": [s.value for s in self.shapes],
            "guard": self.guard_mode.value,
            "search": str(self.search),
            "solver": self.solver_cfg.solver_kind,
            "timeout_ms": self.solver_cfg.timeout,
            "seed_order": self.seed_order,
            "aux": bool(self.aux),
            "allow_algebraic": self.allow_algebraic,
        }


@dataclass
class SynthesizedLoop:
    config: Configuration
    vars: tuple[Var, ...]
    params: tuple[Var, ...]
    B: list[list[ModelValue]]
    X0: tuple                            # Polynomial per row, or AlgebraicOpaque
    eigen_summary: list[tuple[str, int]]
    verified: str                        # oracle-verified | unverified-algebraic | unverified-by-flag
    aux: Var | None = None
    verification: VerificationResult | None = None
    grid: VerificationResult | None = None

    @property
    def is_rational(self) -> bool:
        vals = [x for row in self.B for x in row] + list(self.X0)
        return not any(isinstance(x, AlgebraicOpaque) for x in vals)

    @property
    def bound(self) -> int | None:
        return self.verification.n_checked if self.verification else None

    @property
    def assignments(self) -> dict[Var, Polynomial]:
        """Right-hand side of every update, ``x_i <- sum_j B_ij x_j``."""
        if not self.is_rational:
            raise ValueError("assignments of an algebraic loop are not rational polynomials")
        out = {}
        for i, v in enumerate(self.vars):
            p = Polynomial()
            for j, u in enumerate(self.vars):
                if self.B[i][j]:
                    p = p + Polynomial.var(u) * self.B[i][j]
            out[v] = p
        return out

    def concrete(self) -> ConcreteLoop:
        return ConcreteLoop.make(self.B, self.X0, self.vars, self.params)

    def to_dict(self) -> dict:
        d = {
            "configuration": self.config.label(),
            "shape": self.config.shape.value,
            "partition": list(self.config.partition.parts),
            "permutation": [v.name for v in self.config.order],
            "vars": [v.name for v in self.vars],
            "params": [p.name for p in self.params],
            "aux": self.aux.name if self.aux else None,
            "B": [[str(x) for x in row] for row in self.B],
            "X0": [str(x) for x in self.X0],
            "eigenvalues": [{"value": v, "multiplicity": m} for v, m in self.eigen_summary],
            "verified": self.verified,
            "bound": self.bound,
        }
        if self.is_rational:
            d["assignments"] = {v.name: str(p) for v, p in self.assignments.items()}
        if self.verification is not None:
            d["verification"] = {"status": self.verification.status,
                                 "iterations": self.verification.n_checked,
                                 "order_bound": self.verification.bound}
        if self.grid is not None:
            d["grid_check"] = {"status": self.grid.status, "iterations": self.grid.n_checked}
        return d


@dataclass
class ConfigRow:
    index: int
    shape: str
    partition: str
    permutation: str
    status: str
    constraints: int = 0
    max_degree: int = 0
    solve_time: float = 0.0
    message: str = ""

    def to_dict(self, timings: bool = True) -> dict:
        d = {"index": self.index, "shape": self.shape, "partition": self.partition,
             "permutation": self.permutation, "status": self.status,
             "constraints": self.constraints, "max_degree": self.max_degree}
        if timings:
            d["solve_time"] = round(self.solve_time, 3)
        if self.message:
            d["message"] = self.message
        return d


@dataclass
class SearchReport:
    problem: dict
    rows: list[ConfigRow]
    configurations: int
    elapsed: float = 0.0

    def to_dict(self, timings: bool = True) -> dict:
        d = {"problem": self.problem, "configurations": self.configurations,
             "rows": [r.to_dict(timings) for r in self.rows]}
        if timings:
            d["elapsed"] = round(self.elapsed, 3)
        return d


@dataclass
class SynthesisResult:
    loops: list[SynthesizedLoop]
    report: SearchReport

    def __iter__(self):
        return iter((self.loops, self.report))


# ---------------------------------------------------------------------------
# one configuration


def _row(config: Configuration, status: str, **kw) -> ConfigRow:
    return ConfigRow(config.index, config.shape.value, str(config.partition),
                     ",".join(v.name for v in config.order), status, **kw)


def run_configuration(problem: SynthesisProblem, config: Configuration,
                      cancel: threading.Event | None = None) -> tuple[ConfigRow, SynthesizedLoop | None]:
    """Build, solve, extract and verify a single configuration."""
    spec = problem.spec
    _, aux = problem.layout()
    rt, cft = build_templates(problem.size, config.shape, config.partition, config.order,
                              params=spec.param_map(), aux=aux)
    cs = assemble(spec, rt, cft, problem.guard_mode)
    dump = None
    if problem.dump_smt:
        Path(problem.dump_smt).mkdir(parents=True, exist_ok=True)
        dump = Path(problem.dump_smt) / f"config_{config.index:04d}.smt2"
    outcome = solve(cs, problem.solver_cfg, cancel, dump)
    row = _row(config, outcome.status, constraints=len(cs), max_degree=cs.max_degree(),
               solve_time=outcome.elapsed, message=outcome.message if outcome.status != "sat" else "")
    if not outcome.sat:
        return row, None

    model = outcome.model
    extracted = extract_loop(model, rt)
    eigen = [(str(model[w]), m) for w, m in zip(cft.roots, config.partition)]
    if rt.basis is None:
        x0 = [row_[0] for row_ in extracted.A]
    else:
        x0 = []
        for row_ in extracted.A:
            if any(isinstance(a, AlgebraicOpaque) for a in row_):
                x0.append(next(a for a in row_ if isinstance(a, AlgebraicOpaque)))
            else:
                x0.append(sum((rt.basis[j, 0] * a for j, a in enumerate(row_)), Polynomial()))
    loop = SynthesizedLoop(config, rt.var_order, rt.params, extracted.B,
                           tuple(Polynomial.lift(x) if isinstance(x, Fraction) else x for x in x0),
                           eigen, "unverified-by-flag", aux=aux)
    if not loop.is_rational:
        if not problem.allow_algebraic:
            row.status = "sat-algebraic"
            row.message = "irrational entries in A or B; rerun with algebraic models allowed"
            return row, None
        loop.verified = "unverified-algebraic"
        return row, loop
    if not problem.verify:
        return row, loop

    conc = loop.concrete()
    iters = max(order_bound(spec, problem.size), problem.verify_iters)
    res = unroll_check(conc, spec, iters)
    if res.holds and rt.params:
        loop.grid = grid_check(conc, spec, iters)
        if not loop.grid.holds:
            res = loop.grid
    loop.verification = res
    if not res.holds:
        row.status = "verify-failed"
        row.message = f"oracle rejects the model at n={res.first_bad_n}"
        return row, None
    loop.verified = "oracle-verified"
    row.status = "verified"
    return row, loop


# ---------------------------------------------------------------------------
# the search


def synthesize(problem: SynthesisProblem) -> SynthesisResult:
    start = time.monotonic()
    cursor = problem.cursor()
    total = len(cursor)
    limit = problem.search.limit
    deadline = start + problem.global_timeout if problem.global_timeout else None
    if problem.jobs == 1:
        rows, loops = _sequential(problem, cursor, limit, deadline)
    else:
        rows, loops = _parallel(problem, cursor, limit, deadline)
    report = SearchReport(problem.echo(), rows, total, time.monotonic() - start)
    return SynthesisResult(loops, report)


def _sequential(problem, cursor, limit, deadline):
    rows, loops = [], []
    while (config := next_config(cursor)) is not EXHAUSTED:
        if deadline is not None and time.monotonic() > deadline:
            rows.append(_row(config, "skipped", message="global time budget exhausted"))
            continue
        row, loop = run_configuration(problem, config)
        rows.append(row)
        if loop is not None:
            loops.append(loop)
            if limit is not None and len(loops) >= limit:
                break
    return rows, loops


def _parallel(problem, cursor, limit, deadline):
    cancel = threading.Event()
    lock = threading.Lock()
    found: list = []

    def work(config):
        if cancel.is_set():
            return _row(config, "skipped", message="cancelled"), None
        if deadline is not None and time.monotonic() > deadline:
            return _row(config, "skipped", message="global time budget exhausted"), None
        row, loop = run_configuration(problem, config, cancel)
        if loop is not None:
            with lock:
                found.append(loop)
                if limit is not None and len(found) >= limit:
                    cancel.set()
        return row, loop

    configs = []
    while (config := next_config(cursor)) is not EXHAUSTED:
        configs.append(config)
    with ThreadPoolExecutor(max_workers=problem.jobs) as pool:
        results = list(pool.map(work, configs))
    rows = [r for r, _ in results]
    loops = [lp for _, lp in results if lp is not None]
    if limit is not None:
        loops = loops[:limit]
    return rows, loops
