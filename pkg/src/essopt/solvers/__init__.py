"""Solvers for canonical problems: interior point, branch and bound, penalty, hull."""
from __future__ import annotations

from ..problem import CanonicalProblem
from .base import STATUSES, Solution, SolverOptions, row_residuals, solve_continuous
from .bnb import solve_mixed_integer
from .hull import solve_bess_via_hull
from .kkt import kkt_residuals
from .penalty import complementarity_violation, solve_complementarity_penalty

__all__ = ["STATUSES", "Solution", "SolverOptions", "solve", "solve_continuous", "solve_mixed_integer",
           "solve_complementarity_penalty", "solve_bess_via_hull", "kkt_residuals", "row_residuals",
           "complementarity_violation"]


def solve(p: CanonicalProblem, opts: SolverOptions | None = None) -> Solution:
    """Pick the driver from the problem's structure."""
    if p.nonconvex_rows:
        return solve_bess_via_hull(p, opts)
    if p.bilinear_pairs:
        return solve_complementarity_penalty(p, opts)
    if p.binary_vars:
        return solve_mixed_integer(p, opts)
    return solve_continuous(p, opts)
