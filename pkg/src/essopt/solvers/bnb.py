"""Best-first branch and bound over binary variables, interior-point relaxations at the nodes."""
from __future__ import annotations

import heapq
import itertools
import time

from ..problem import CanonicalProblem
from .base import Solution, SolverOptions, solve_continuous


def branching_order(p: CanonicalProblem) -> dict[str, tuple]:
    """Tie-break key per binary: (device, period, field) for storage binaries, else position."""
    key: dict[str, tuple] = {}
    for dev in p.devices:
        fields = dev.get("fields", {})
        for k, fname in enumerate(("alpha_ch", "alpha_disch")):
            for t, v in enumerate(fields.get(fname, [])):
                key[v] = (0, dev.get("index", 0), t, k)
    for pos, v in enumerate(p.binary_vars):
        key.setdefault(v, (1, pos, 0, 0))
    return key


def _fix(p: CanonicalProblem, fixings: dict[str, int]) -> CanonicalProblem:
    return p.with_bounds({v: (float(b), float(b)) for v, b in fixings.items()}) if fixings else p


def solve_mixed_integer(p: CanonicalProblem, opts: SolverOptions | None = None) -> Solution:
    """Exact (to ``bnb_gap_tol``) solve of a mixed-binary convex problem.

    Branches on the most fractional binary; ties go to the lowest device,
    then the lowest period. Every node also tries the rounded relaxation as an
    incumbent. Returned values come from a final solve with all binaries fixed,
    so binaries are exactly 0 or 1.
    """
    opts = opts or SolverOptions()
    if not p.binary_vars:
        sol = solve_continuous(p, opts)
        sol.stats["nodes"] = 1
        return sol
    t0 = time.perf_counter()
    order = branching_order(p)
    tol = opts.integrality_tol
    seq = itertools.count()

    best: Solution | None = None
    nodes = 0
    heap: list[tuple[float, int, dict[str, int]]] = [(float("-inf"), next(seq), {})]
    root_status = None
    best_bound = float("-inf")

    def try_incumbent(fixings: dict[str, int]):
        nonlocal best
        sol = solve_continuous(_fix(p, fixings), opts, relax_binaries=True)
        if sol.status == "optimal" and (best is None or sol.objective < best.objective):
            best = sol

    def prune_level() -> float:
        if best is None:
            return float("inf")
        return best.objective - opts.bnb_gap_tol * max(1.0, abs(best.objective))

    while heap and nodes < opts.max_nodes:
        bound, _, fixings = heapq.heappop(heap)
        if bound >= prune_level():
            continue
        nodes += 1
        relax = solve_continuous(_fix(p, fixings), opts, relax_binaries=True)
        if root_status is None:
            root_status = relax.status
            if relax.status == "unbounded":
                relax.stats["nodes"] = nodes
                return relax
        if relax.status == "infeasible":
            continue
        if relax.status != "optimal":
            # numerically unreliable node: branch anyway, inheriting the parent bound
            node_bound = bound
        else:
            node_bound = relax.objective
        if node_bound >= prune_level():
            continue

        frac = {v: min(relax.values[v], 1.0 - relax.values[v]) for v in p.binary_vars if v not in fixings}
        fractional = {v: f for v, f in frac.items() if f > tol}
        rounded = dict(fixings)
        rounded.update({v: int(relax.values[v] > 0.5) for v in frac})
        try_incumbent(rounded)
        if not fractional:
            continue
        var = min(fractional, key=lambda v: (-fractional[v], order[v]))
        for b in (0, 1):
            child = dict(fixings)
            child[var] = b
            heapq.heappush(heap, (node_bound, next(seq), child))

    if heap:
        live = [b for b, _, _ in heap]
        best_bound = min(live)
    elapsed = time.perf_counter() - t0
    if best is None:
        status = "iteration_limit" if heap else "infeasible"
        return Solution(status, float("inf"), {v: float("nan") for v in p.variables},
                        stats=dict(nodes=nodes, wall_time=elapsed),
                        message="no integer-feasible point found")
    if not heap or best_bound >= prune_level():
        gap = 0.0
        status = "optimal"
    else:
        gap = best.objective - best_bound
        status = "iteration_limit"
    best.status = status
    best.gaps = dict(best.gaps, bnb_gap=gap)
    best.stats = dict(best.stats, nodes=nodes, wall_time=elapsed)
    return best
