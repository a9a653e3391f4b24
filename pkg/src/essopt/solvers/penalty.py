"""Penalty method for complementarity pairs ``a * b = 0`` with ``a, b >= 0``."""
from __future__ import annotations

import time

from ..problem import CanonicalProblem
from .base import Solution, SolverOptions, row_residuals, solve_continuous


def complementarity_violation(p: CanonicalProblem, values) -> float:
    """Sum over pairs of ``min(a, b)``, in MW."""
    return p.base_mva * sum(max(0.0, min(values[a], values[b])) for a, b, _ in p.bilinear_pairs)


def objective_scale(p: CanonicalProblem) -> float:
    coeffs = [abs(c) for c in p.objective.linear.values()] + [abs(c) for c in p.objective.quad.values()]
    return max([1.0, *coeffs])


def solve_complementarity_penalty(p: CanonicalProblem, opts: SolverOptions | None = None) -> Solution:
    """Drop the pairs, add ``eps * (a + b)`` to the objective, grow ``eps`` until complementary.

    If the last round still violates ``complementarity_tol`` the smaller member
    of every pair is fixed to zero and the problem re-solved once with the
    original objective; the status is then ``restored_feasible``.
    """
    opts = opts or SolverOptions()
    if not p.bilinear_pairs:
        return solve_continuous(p, opts)
    if p.binary_vars:
        raise ValueError("penalty solver does not handle binaries")
    t0 = time.perf_counter()
    eps = opts.penalty_epsilon if opts.penalty_epsilon is not None else 1e-3 * objective_scale(p)
    history = []
    sol = None
    for _ in range(max(1, opts.penalty_rounds)):
        extra: dict[str, float] = {}
        for a, b, _ in p.bilinear_pairs:
            extra[a] = extra.get(a, 0.0) + eps
            extra[b] = extra.get(b, 0.0) + eps
        sol = solve_continuous(p, opts, extra_linear=extra, ignore_bilinear=True)
        if sol.status != "optimal":
            break
        viol = complementarity_violation(p, sol.values)
        history.append((eps, viol))
        if viol <= opts.complementarity_tol or eps == 0.0:
            break
        eps *= opts.penalty_growth
    if sol.status != "optimal":
        sol.gaps = dict(sol.gaps, penalty_history=history)
        sol.stats["wall_time"] = time.perf_counter() - t0
        return sol

    viol = complementarity_violation(p, sol.values)
    status = "optimal"
    if viol > opts.complementarity_tol:
        fix = {}
        for a, b, _ in p.bilinear_pairs:
            v = a if sol.values[a] <= sol.values[b] else b
            var = p.variables[v]
            # intersect with the original bounds so a positive lower bound makes the repair infeasible
            fix[v] = (max(var.lb, 0.0), min(var.ub, 0.0))
        repaired = solve_continuous(p.with_bounds(fix), opts, ignore_bilinear=True)
        if repaired.status != "optimal":
            sol.status = "restoration_failed"
            sol.message = f"repair solve returned {repaired.status}"
            sol.gaps = dict(sol.gaps, complementarity=viol, penalty_history=history)
            sol.stats["wall_time"] = time.perf_counter() - t0
            return sol
        sol, status = repaired, "restored_feasible"
        viol = complementarity_violation(p, sol.values)

    sol.objective = p.objective.value(sol.values)
    sol.residuals = row_residuals(p, sol.values)
    sol.status = status
    sol.gaps = dict(sol.gaps, complementarity=viol, penalty_history=history)
    sol.stats = dict(sol.stats, rounds=len(history), wall_time=time.perf_counter() - t0)
    return sol
