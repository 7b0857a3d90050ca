"""Synthesis of linear loops from polynomial invariants.

The pipeline: symbolic recurrence templates (:mod:`.recurrence`), a polynomial
constraint problem over their unknowns (:mod:`.pcp`), an external SMT solver
(:mod:`.smt`), and an exact unrolling oracle that checks every answer
(:mod:`.verify`).  :mod:`.synth` runs the search, :mod:`.cli` is the front end.
"""

from .pcp import InvariantSpec, assemble
from .polyring import Polynomial, Var, VarKind, parse_polynomial
from .recurrence import IntegerPartition, MatrixShape, build_templates, int_partitions
from .smt import SolverConfig, solve
from .synth import SynthesisProblem, SynthesizedLoop, synthesize
from .verify import ConcreteLoop, order_bound, unroll_check

__version__ = "0.1.0"

__all__ = [
    "ConcreteLoop", "IntegerPartition", "InvariantSpec", "MatrixShape", "Polynomial",
    "SolverConfig", "SynthesisProblem", "SynthesizedLoop", "Var", "VarKind", "assemble",
    "build_templates", "int_partitions", "order_bound", "parse_polynomial", "solve",
    "synthesize", "unroll_check",
]
