"""Solver options, the solution record, and the continuous (LP/QP/SOCP) entry point."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..problem import CanonicalProblem
from .compile import ConicProgram, Infeasible, compile_problem
from .ipm import IpmResult, solve_cone_program

STATUSES = ("optimal", "infeasible", "unbounded", "iteration_limit", "restored_feasible",
            "restoration_failed")


@dataclass(frozen=True)
class SolverOptions:
    feasibility_tol: float = 1e-8
    optimality_tol: float = 1e-8
    max_ip_iterations: int = 200
    bnb_gap_tol: float = 1e-6
    max_nodes: int = 20000
    integrality_tol: float = 1e-6
    penalty_epsilon: float | None = None
    penalty_growth: float = 10.0
    penalty_rounds: int = 6
    complementarity_tol: float = 1e-6
    random_seed: int = 0

    def __post_init__(self):
        for name in ("feasibility_tol", "optimality_tol", "bnb_gap_tol", "complementarity_tol",
                     "integrality_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.penalty_epsilon is not None and self.penalty_epsilon < 0:
            raise ValueError("penalty_epsilon must be nonnegative")
        if self.penalty_growth < 1:
            raise ValueError("penalty_growth must be at least 1")


@dataclass
class Solution:
    status: str
    objective: float
    values: dict[str, float]
    residuals: dict[str, float] = field(default_factory=dict)
    gaps: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)
    message: str = ""
    conic: ConicProgram | None = None
    raw: IpmResult | None = None

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "restored_feasible")

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values(), default=0.0)

    def __getitem__(self, name: str) -> float:
        return self.values[name]


def row_residuals(p: CanonicalProblem, x: Mapping[str, float], include_nonconvex: bool = True) -> dict[str, float]:
    """Absolute violation of every row and bound, keyed by row id (``bound:<var>`` for bounds)."""
    out: dict[str, float] = {}
    for rid, row in p.row_ids():
        if rid.startswith("ncvx") and not include_nonconvex:
            continue
        out[rid] = row.violation(x)
    for name, v in p.variables.items():
        viol = max(0.0, v.lb - x[name], x[name] - v.ub)
        if viol > 0:
            out[f"bound:{name}"] = viol
    return out


TIGHTEN = 1e-2


def _meets(res: IpmResult, opts: SolverOptions) -> bool:
    denom = max(1.0, min(abs(res.pcost), abs(res.dcost)))
    return (res.pres <= opts.feasibility_tol and res.dres <= opts.feasibility_tol
            and res.gap / denom <= opts.optimality_tol)


def _empty_values(p: CanonicalProblem) -> dict[str, float]:
    return {n: float("nan") for n in p.variables}


def solve_continuous(p: CanonicalProblem, opts: SolverOptions | None = None, *,
                     relax_binaries: bool = False, extra_linear: Mapping[str, float] | None = None,
                     ignore_bilinear: bool = False) -> Solution:
    """Interior-point solve of a problem with no binaries, bilinear pairs or nonconvex rows.

    ``relax_binaries`` and ``ignore_bilinear`` let the mixed-integer and
    penalty drivers reuse this on their relaxations.
    """
    opts = opts or SolverOptions()
    if p.binary_vars and not relax_binaries:
        raise ValueError("problem has binary variables; use solve_mixed_integer")
    if p.bilinear_pairs and not ignore_bilinear:
        raise ValueError("problem has bilinear pairs; use solve_complementarity_penalty")
    if p.nonconvex_rows:
        raise ValueError("problem has nonconvex rows; use solve_bess_via_hull")
    if not p.variables:
        raise ValueError("structurally empty problem")

    t0 = time.perf_counter()
    try:
        cp = compile_problem(p, relax_binaries=relax_binaries, extra_linear=dict(extra_linear or {}))
    except Infeasible as exc:
        return Solution("infeasible", float("nan"), _empty_values(p), message=f"presolve: {exc}",
                        stats=dict(iterations=0, wall_time=time.perf_counter() - t0))

    # aim tighter than asked so per-unit residuals stay small in natural units too,
    # but accept a stalled run that meets the requested tolerances
    res = solve_cone_program(cp.c, cp.A, cp.b, cp.G, cp.h, cp.l, cp.q,
                             feastol=opts.feasibility_tol * TIGHTEN, reltol=opts.optimality_tol * TIGHTEN,
                             abstol=opts.optimality_tol * TIGHTEN, max_iter=opts.max_ip_iterations)
    if res.status == "iteration_limit" and _meets(res, opts):
        res.status = "optimal"
    stats = dict(iterations=res.iterations, wall_time=time.perf_counter() - t0,
                 variables=cp.n, equalities=cp.b.size, cone_rows=cp.m)
    kkt = dict(pres=res.pres, dres=res.dres, gap=res.gap)
    if res.status in ("infeasible", "unbounded"):
        obj = float("inf") if res.status == "infeasible" else float("-inf")
        return Solution(res.status, obj, _empty_values(p), gaps=kkt, stats=stats,
                        conic=cp, raw=res, message=f"interior point certificate of {res.status}")
    values = cp.assignment(res.x)
    for v in p.variables:
        values.setdefault(v, 0.0)
    objective = p.objective.value(values)
    for name, c in (extra_linear or {}).items():
        objective += c * values[name]
    sol = Solution(res.status, objective, values, row_residuals(p, values), kkt, stats,
                   conic=cp, raw=res)
    if res.status != "optimal":
        sol.message = "iteration limit or numerical stall; best iterate attached"
    return sol
