"""Converter-loss storage solved through its convex hull, with a tightness check and repair."""
from __future__ import annotations

import time

import numpy as np

from ..blocks import ConstraintBlock
from ..ess import EssModel, add_hull_rows
from ..problem import CanonicalProblem
from .base import Solution, SolverOptions, row_residuals, solve_continuous

LOSS_MODELS = (EssModel.BESS_LOSS, EssModel.BESS_CONVEX)


def relax_loss_rows(p: CanonicalProblem, variant: str | None = None) -> CanonicalProblem:
    """Replace every nonconvex loss row by its hull rows."""
    if not p.nonconvex_rows:
        return p
    variant = variant or p.options.get("hull_variant", "as_printed")
    linear, quad, cones = list(p.linear_rows), list(p.quad_rows), list(p.cone_rows)
    prov = {k: v for k, v in p.provenance.items() if not k.startswith("ncvx")}
    for row in p.nonconvex_rows:
        if row.meta is None:
            raise ValueError(f"nonconvex row {row.tag} carries no relaxation data")
        blk = ConstraintBlock(f"ess{row.meta['index']}")
        add_hull_rows(blk, row.meta, variant)
        for r in blk.linear_rows:
            prov[f"lin{len(linear)}"] = (blk.name, r.tag)
            linear.append(r)
        for r in blk.quad_rows:
            prov[f"quad{len(quad)}"] = (blk.name, r.tag)
            quad.append(r)
        for r in blk.cone_rows:
            prov[f"cone{len(cones)}"] = (blk.name, r.tag)
            cones.append(r)
    return p.with_changes(linear_rows=tuple(linear), quad_rows=tuple(quad), cone_rows=tuple(cones),
                          nonconvex_rows=(), provenance=prov)


def loss_gaps(p: CanonicalProblem, values) -> dict[int, np.ndarray]:
    """Per device, ``p_loss * V - (r_eq p^2 + r_cvt q^2)`` per period (per-unit)."""
    out = {}
    for dev in p.devices:
        if EssModel(dev["model"]) not in LOSS_MODELS:
            continue
        d, f = dev["device"], dev["fields"]
        g = [values[f["p_loss"][t]] * values[f["v"][t]]
             - d.r_eq * values[f["p_signed"][t]] ** 2 - d.r_cvt * values[f["q_ess"][t]] ** 2
             for t in range(len(f["p_loss"]))]
        out[dev["index"]] = np.asarray(g)
    return out


def restore_losses(p: CanonicalProblem, values) -> tuple[dict[str, float], float]:
    """Recompute ``p_loss`` from the loss equation, then ``p_net`` and SOC.

    Returns the new values and the largest bound violation of SOC and the
    converter rating at the repaired point (per-unit).
    """
    vals = dict(values)
    worst = 0.0
    for dev in p.devices:
        if EssModel(dev["model"]) not in LOSS_MODELS:
            continue
        d, f, base, h = dev["device"], dev["fields"], dev["base_mva"], dev["horizon"]
        soc = d.e_init / base
        s_max = d.s_cvt_max / base
        for t in range(h.num_periods):
            p_, q_ = vals[f["p_signed"][t]], vals[f["q_ess"][t]]
            loss = (d.r_eq * p_ * p_ + d.r_cvt * q_ * q_) / vals[f["v"][t]]
            vals[f["p_loss"][t]] = loss
            vals[f["p_net"][t]] = p_ + loss
            soc -= h.dt_hours * (p_ + loss)
            vals[f["soc"][t]] = soc
            worst = max(worst, d.e_min / base - soc, soc - d.e_max / base,
                        float(np.hypot(p_, q_)) - s_max)
    return vals, worst


def solve_bess_via_hull(p: CanonicalProblem, opts: SolverOptions | None = None) -> Solution:
    """Solve the hull relaxation, measure the loss-equation gap, repair if it is not tight.

    ``p`` may carry the nonconvex loss rows (they are replaced) or already be the
    hull model. Status ``optimal`` means the relaxation gap was within
    ``feasibility_tol``, so the point is optimal for the nonconvex model.
    Otherwise ``p_loss`` is re-evaluated from the loss equation, ``p_net`` and
    SOC are recomputed, and the status is ``restored_feasible`` (feasible,
    possibly suboptimal) or ``restoration_failed`` when the repaired SOC leaves
    its band.
    """
    opts = opts or SolverOptions()
    t0 = time.perf_counter()
    relaxed = relax_loss_rows(p)
    sol = solve_continuous(relaxed, opts)
    if sol.status != "optimal":
        return sol
    relax_obj = sol.objective
    gaps = loss_gaps(p, sol.values)
    max_gap = max((float(g.max(initial=0.0)) for g in gaps.values()), default=0.0)
    tight = max_gap <= opts.feasibility_tol

    if tight:
        values, violation = sol.values, 0.0
    else:
        values, violation = restore_losses(p, sol.values)
    sol.values = values
    sol.objective = p.objective.value(values)
    sol.residuals = row_residuals(p, values)
    if violation > opts.feasibility_tol:
        sol.status = "restoration_failed"
        sol.message = f"repaired point violates SOC or converter bounds by {violation:.3g} pu"
    else:
        sol.status = "optimal" if tight else "restored_feasible"
    sol.gaps = dict(sol.gaps, loss_gap={k: v.tolist() for k, v in gaps.items()}, max_loss_gap=max_gap,
                    relaxation_objective=relax_obj, restoration_violation=violation)
    sol.stats["wall_time"] = time.perf_counter() - t0
    return sol
