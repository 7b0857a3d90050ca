import pytest

from loopsynth.polyring import Var
from loopsynth.recurrence import IntegerPartition, MatrixShape
from loopsynth.smt import SolverConfig
from loopsynth.synth import (EXHAUSTED, ConfigCursor, SearchMode, SynthesisProblem,
                             next_config, run_configuration, synthesize)
from loopsynth.verify import order_bound, unroll_check

from conftest import requires_solver, spec

X, Y = Var("x"), Var("y")
UNI, FULL = MatrixShape.UNITRIANGULAR, MatrixShape.FULL


def _labels(cursor):
    out = []
    while (c := next_config(cursor)) is not EXHAUSTED:
        out.append((c.shape, c.partition.parts, tuple(v.name for v in c.order)))
    return out


def test_cursor_order_two_variables():
    got = _labels(ConfigCursor((UNI, FULL), 2, (X, Y)))
    assert got == [
        (UNI, (2,), ("x", "y")), (UNI, (2,), ("y", "x")),
        (UNI, (1, 1), ("x", "y")), (UNI, (1, 1), ("y", "x")),
        (FULL, (2,), ("x", "y")), (FULL, (1, 1), ("x", "y")),
    ]


def test_cursor_single_variable():
    assert len(ConfigCursor((UNI, MatrixShape.UPPER, FULL), 1, (X,))) == 3


def test_cursor_exhaustion_is_idempotent():
    cur = ConfigCursor((FULL,), 1, (X,))
    assert next_config(cur) is not EXHAUSTED
    assert next_config(cur) is EXHAUSTED
    assert next_config(cur) is EXHAUSTED


def test_cursor_aux_last_and_fixed_seed_order():
    one = Var("one")
    cur = ConfigCursor((UNI,), 3, (X, Y), aux=one, seed_order="fixed")
    labels = _labels(cur)
    assert all(order == ("x", "y", "one") for _, _, order in labels)
    assert len(labels) == 3
    with pytest.raises(ValueError):
        ConfigCursor((UNI,), 2, (X, Y), seed_order="random")


def test_cursor_budget_and_partition_filter():
    vs = tuple(Var(f"v{i}") for i in range(4))
    cur = ConfigCursor((UNI,), 4, vs, permutation_budget=3,
                       partitions=(IntegerPartition((4,)), IntegerPartition((2, 2))))
    assert len(cur) == 6
    assert len(ConfigCursor((UNI,), 4, vs)) == 5 * 24


def test_search_mode_parse():
    assert SearchMode.parse("first") == SearchMode("first", 1)
    assert SearchMode.parse("all:3") == SearchMode("all", 3)
    assert SearchMode.parse("exhaustive").limit is None
    assert str(SearchMode.parse("all:3")) == "all:3"
    for bad in ("all", "all:0", "all:x", "some"):
        with pytest.raises(ValueError):
            SearchMode.parse(bad)


def test_problem_defaults_and_validation():
    sp = spec("x == 2*y", ["x", "y"], [])
    p = SynthesisProblem(sp)
    assert p.size == 3 and p.aux
    rows, aux = p.layout()
    assert [v.name for v in rows] == ["x", "y"] and aux.name == "one"
    assert SynthesisProblem(sp, size=2).aux is False
    assert SynthesisProblem(sp, aux=False).size == 2
    filler = SynthesisProblem(sp, size=4)
    assert [v.name for v in filler.layout()[0]] == ["x", "y", "h1"]
    with pytest.raises(ValueError):
        SynthesisProblem(sp, size=1)
    with pytest.raises(ValueError):
        SynthesisProblem(sp, jobs=0)
    with pytest.raises(ValueError):
        SynthesisProblem(sp, verify_iters=-1)
    assert SynthesisProblem(sp, search="all:2").search.limit == 2


def test_aux_name_avoids_collisions():
    sp = spec("one == 2*y", ["one", "y"], [])
    _, aux = SynthesisProblem(sp).layout()
    assert aux.name == "one_"


def _cfg():
    return SolverConfig(timeout=30_000)


@requires_solver
def test_x_equals_2y_size_two():
    sp = spec("x == 2*y", ["x", "y"], [])
    loops, report = synthesize(SynthesisProblem(sp, size=2, solver_cfg=_cfg()))
    assert len(loops) == 1
    lp = loops[0]
    assert lp.verified == "oracle-verified"
    assert lp.verification.status == "holds-complete"
    assert lp.bound >= order_bound(sp, 2)
    assert report.rows[-1].status == "verified"
    assert unroll_check(lp.concrete(), sp, 40).holds


@requires_solver
def test_x_equals_2y_with_aux_is_affine():
    sp = spec("x == 2*y", ["x", "y"], [])
    loops, _ = synthesize(SynthesisProblem(sp, solver_cfg=_cfg()))
    lp = loops[0]
    assert lp.aux.name == "one"
    assert lp.config.shape is UNI
    assert lp.to_dict()["assignments"]["one"] == "one"


@requires_solver
def test_determinism():
    sp = spec("a == b^2", ["a", "b"], [])
    runs = [synthesize(SynthesisProblem(sp, solver_cfg=_cfg(), search="all:2")) for _ in range(2)]
    assert runs[0].report.to_dict(timings=False) == runs[1].report.to_dict(timings=False)
    assert [lp.to_dict() for lp in runs[0].loops] == [lp.to_dict() for lp in runs[1].loops]


@requires_solver
def test_parallel_solutions_replay_sequentially():
    sp = spec("a == b^2", ["a", "b"], [])
    problem = SynthesisProblem(sp, solver_cfg=_cfg(), jobs=3, search="all:2")
    loops, report = synthesize(problem)
    assert loops
    assert len(report.rows) == report.configurations
    for lp in loops:
        row, again = run_configuration(problem, lp.config)
        assert row.status == "verified"
        assert again.verified == "oracle-verified"


@requires_solver
def test_exhaustive_records_every_configuration(tmp_path):
    sp = spec("x == 2*y", ["x", "y"], [])
    problem = SynthesisProblem(sp, size=2, shapes=(UNI,), search="exhaustive", solver_cfg=_cfg(),
                               dump_smt=str(tmp_path))
    loops, report = synthesize(problem)
    assert loops == []
    assert [r.status for r in report.rows] == ["unsat"] * 4
    assert sorted(p.name for p in tmp_path.iterdir()) == [f"config_{i:04d}.smt2" for i in range(4)]


@requires_solver
def test_unverified_by_flag():
    sp = spec("x == 2*y", ["x", "y"], [])
    loops, _ = synthesize(SynthesisProblem(sp, solver_cfg=_cfg(), verify=False))
    assert loops[0].verified == "unverified-by-flag"
    assert loops[0].verification is None


@requires_solver
def test_parameterized_synthesis():
    sp = spec("x0 == y0*q + r", ["x", "r", "q", "y"], ["x0", "y0"])
    loops, _ = synthesize(SynthesisProblem(sp, solver_cfg=_cfg()))
    lp = loops[0]
    assert lp.verified == "oracle-verified"
    assert lp.grid is not None and lp.grid.holds
    assert lp.params == sp.params


@requires_solver
def test_global_timeout_skips_the_rest():
    sp = spec("x == 2*y", ["x", "y"], [])
    problem = SynthesisProblem(sp, size=2, search="exhaustive", solver_cfg=_cfg(), global_timeout=1e-9)
    _, report = synthesize(problem)
    assert {r.status for r in report.rows} == {"skipped"}
