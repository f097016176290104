"""Transportation-problem solver suite for CDN request routing.

Sequential oracles plus three distributed algorithms (constructive
heuristic, distributed transportation simplex, distributed auction) running
on a deterministic message-passing simulation kernel, with a benchmark
harness for comparing them.
"""

from .tp import (
    FlowSolution,
    FlowViolation,
    Infeasible,
    RrspInstance,
    TpInstance,
    check_feasible,
    objective,
    reduce_rrsp_to_tp,
)
from .seq import (
    BasisState,
    PivotCycle,
    SeqResult,
    brute_force_optimum,
    compute_duals,
    minimum_cost_method,
    northwest_corner,
    pivot,
    reduced_costs,
    transportation_simplex,
)

__all__ = [
    "BasisState",
    "FlowSolution",
    "FlowViolation",
    "Infeasible",
    "PivotCycle",
    "RrspInstance",
    "SeqResult",
    "TpInstance",
    "brute_force_optimum",
    "check_feasible",
    "compute_duals",
    "minimum_cost_method",
    "northwest_corner",
    "objective",
    "pivot",
    "reduced_costs",
    "reduce_rrsp_to_tp",
    "transportation_simplex",
]
