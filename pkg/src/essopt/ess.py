"""The five storage formulations as constraint blocks, plus SOC arithmetic.

Sign convention
---------------
Internally every model is mapped onto one quantity, ``p_store``: power flowing
into the storage reservoir. Stored energy is always
``soc[t] = e_init + dt * sum(p_store[0..t])``.

=================  ==========================================  =================
model              p_store                                     grid injection
=================  ==========================================  =================
milp               p_net = eta_ch*p_ch - p_disch/eta_disch     p_disch - p_ch
linear             -p_signed                                   p_signed
complementarity    p_net (as milp)                             p_disch - p_ch
bess-loss          -p_net = -(p_signed + p_loss)               p_signed, q_ess
bess-convex        -p_net (as bess-loss)                       p_signed, q_ess
=================  ==========================================  =================

So for the converter models ``p_signed > 0`` means discharging and the
reservoir additionally pays ``p_loss``.

All block variables are per-unit on ``base_mva`` (energies in per-unit hours);
callers convert back at the boundary.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .blocks import Affine, ConstraintBlock
from .grid import EssDevice, Horizon

HULL_VARIANTS = ("as_printed", "symmetric")


class EssModel(str, Enum):
    MILP = "milp"
    LINEAR = "linear"
    COMPLEMENTARITY = "complementarity"
    BESS_LOSS = "bess-loss"
    BESS_CONVEX = "bess-convex"

    @property
    def number(self) -> int:
        return _MODEL_NUMBERS[self]

    @classmethod
    def from_number(cls, n: int) -> "EssModel":
        for m, k in _MODEL_NUMBERS.items():
            if k == n:
                return m
        raise KeyError(n)

    @property
    def needs_voltage(self) -> bool:
        return self in (EssModel.BESS_LOSS, EssModel.BESS_CONVEX)


_MODEL_NUMBERS = {EssModel.MILP: 2, EssModel.LINEAR: 3, EssModel.COMPLEMENTARITY: 4,
                  EssModel.BESS_LOSS: 5, EssModel.BESS_CONVEX: 6}


@dataclass(frozen=True)
class VoltageRef:
    """Squared-voltage variables of one bus, one name per period, with their bounds."""

    bus: int
    names: tuple[str, ...]
    v_sq_min: float
    v_sq_max: float


def _names(prefix: str, field: str, T: int) -> list[str]:
    return [f"{prefix}.{field}[{t}]" for t in range(T)]


def _soc_rows(blk: ConstraintBlock, prefix: str, dev: EssDevice, h: Horizon, base: float,
              store: Sequence[dict[str, float]], terminal_soc: bool):
    T, dt = h.num_periods, h.dt_hours
    soc = [blk.var(n, dev.e_min / base, dev.e_max / base) for n in _names(prefix, "soc", T)]
    for t in range(T):
        coeffs = {soc[t]: 1.0}
        if t > 0:
            coeffs[soc[t - 1]] = -1.0
        for v, c in store[t].items():
            coeffs[v] = coeffs.get(v, 0.0) - dt * c
        blk.linear(coeffs, "==", dev.e_init / base if t == 0 else 0.0, "soc-balance")
    if terminal_soc:
        blk.linear({soc[-1]: 1.0}, "==", dev.e_init / base, "terminal-soc")
    return soc


def _new_block(model: EssModel, dev: EssDevice, index: int, h: Horizon, base: float) -> ConstraintBlock:
    prefix = f"ess{index}"
    blk = ConstraintBlock(prefix)
    blk.meta.update(model=model, device=dev, index=index, horizon=h, base_mva=base, prefix=prefix)
    return blk


def _finish(blk: ConstraintBlock, fields: dict[str, list[str]]):
    blk.meta["fields"] = fields
    return blk


def emit_milp_model(dev: EssDevice, h: Horizon, *, index: int = 0, base_mva: float = 1.0,
                    terminal_soc: bool = False) -> ConstraintBlock:
    """Charge/discharge powers gated by mode binaries, with efficiencies."""
    T, base = h.num_periods, base_mva
    blk = _new_block(EssModel.MILP, dev, index, h, base)
    px = blk.name
    p_ch = [blk.var(n, 0.0, dev.p_ch_max / base) for n in _names(px, "p_ch", T)]
    p_dis = [blk.var(n, 0.0, dev.p_disch_max / base) for n in _names(px, "p_disch", T)]
    p_net = [blk.var(n) for n in _names(px, "p_net", T)]
    a_ch = [blk.var(n, binary=True) for n in _names(px, "alpha_ch", T)]
    a_dis = [blk.var(n, binary=True) for n in _names(px, "alpha_disch", T)]
    for t in range(T):
        blk.linear({p_net[t]: 1.0, p_ch[t]: -dev.eta_ch, p_dis[t]: 1.0 / dev.eta_disch},
                   "==", 0.0, "net-power")
    soc = _soc_rows(blk, px, dev, h, base, [{p_net[t]: 1.0} for t in range(T)], terminal_soc)
    for t in range(T):
        blk.linear({p_ch[t]: 1.0, a_ch[t]: -dev.p_ch_max / base}, "<=", 0.0, "charge-limit")
        blk.linear({p_dis[t]: 1.0, a_dis[t]: -dev.p_disch_max / base}, "<=", 0.0, "discharge-limit")
        blk.linear({a_ch[t]: 1.0, a_dis[t]: 1.0}, "<=", 1.0, "mode-exclusive")
        blk.add_injection(dev.bus, t, "p", {p_dis[t]: 1.0, p_ch[t]: -1.0})
    return _finish(blk, dict(p_ch=p_ch, p_disch=p_dis, p_net=p_net, alpha_ch=a_ch,
                             alpha_disch=a_dis, soc=soc))


def emit_linear_model(dev: EssDevice, h: Horizon, *, index: int = 0, base_mva: float = 1.0,
                      terminal_soc: bool = False) -> ConstraintBlock:
    """Lossless single signed power, positive when discharging."""
    T, base = h.num_periods, base_mva
    blk = _new_block(EssModel.LINEAR, dev, index, h, base)
    px = blk.name
    p = [blk.var(n, -dev.p_ch_max / base, dev.p_disch_max / base) for n in _names(px, "p_signed", T)]
    soc = _soc_rows(blk, px, dev, h, base, [{p[t]: -1.0} for t in range(T)], terminal_soc)
    for t in range(T):
        blk.add_injection(dev.bus, t, "p", {p[t]: 1.0})
    return _finish(blk, dict(p_signed=p, soc=soc))


def emit_complementarity_model(dev: EssDevice, h: Horizon, *, index: int = 0,
                               base_mva: float = 1.0, terminal_soc: bool = False) -> ConstraintBlock:
    """Milp bookkeeping with the mode binaries replaced by ``p_ch * p_disch = 0`` pairs."""
    T, base = h.num_periods, base_mva
    blk = _new_block(EssModel.COMPLEMENTARITY, dev, index, h, base)
    px = blk.name
    p_ch = [blk.var(n, 0.0, dev.p_ch_max / base) for n in _names(px, "p_ch", T)]
    p_dis = [blk.var(n, 0.0, dev.p_disch_max / base) for n in _names(px, "p_disch", T)]
    p_net = [blk.var(n) for n in _names(px, "p_net", T)]
    for t in range(T):
        blk.linear({p_net[t]: 1.0, p_ch[t]: -dev.eta_ch, p_dis[t]: 1.0 / dev.eta_disch},
                   "==", 0.0, "net-power")
    soc = _soc_rows(blk, px, dev, h, base, [{p_net[t]: 1.0} for t in range(T)], terminal_soc)
    for t in range(T):
        blk.bilinear_pairs.append((p_ch[t], p_dis[t], "complementarity"))
        blk.add_injection(dev.bus, t, "p", {p_dis[t]: 1.0, p_ch[t]: -1.0})
    return _finish(blk, dict(p_ch=p_ch, p_disch=p_dis, p_net=p_net, soc=soc))


def _check_voltage(voltage: VoltageRef | None, dev: EssDevice, h: Horizon):
    if voltage is None or not voltage.names:
        raise ValueError("converter-loss models need squared-voltage variables from a "
                         "branch-flow network block")
    if voltage.bus != dev.bus:
        raise ValueError(f"voltage reference is for bus {voltage.bus}, device sits at bus {dev.bus}")
    if len(voltage.names) != h.num_periods:
        raise ValueError("voltage reference does not cover the horizon")


def _converter_common(model, dev, h, index, base, voltage, terminal_soc):
    T = h.num_periods
    blk = _new_block(model, dev, index, h, base)
    px = blk.name
    s = dev.s_cvt_max / base
    p = [blk.var(n, -s, s) for n in _names(px, "p_signed", T)]
    q = [blk.var(n, -s, s) for n in _names(px, "q_ess", T)]
    loss = [blk.var(n, 0.0) for n in _names(px, "p_loss", T)]
    p_net = [blk.var(n) for n in _names(px, "p_net", T)]
    for t in range(T):
        blk.linear({p_net[t]: 1.0, p[t]: -1.0, loss[t]: -1.0}, "==", 0.0, "net-power")
        blk.cone("soc", (Affine({}, s), Affine({p[t]: 1.0}), Affine({q[t]: 1.0})), "converter-rating")
        blk.add_injection(dev.bus, t, "p", {p[t]: 1.0})
        blk.add_injection(dev.bus, t, "q", {q[t]: 1.0})
    soc = _soc_rows(blk, px, dev, h, base, [{p_net[t]: -1.0} for t in range(T)], terminal_soc)
    blk.meta["voltage"] = voltage
    fields = dict(p_signed=p, q_ess=q, p_loss=loss, p_net=p_net, soc=soc, v=list(voltage.names))
    return blk, fields


def loss_row_meta(dev: EssDevice, base: float, voltage: VoltageRef, t: int,
                  p: str, q: str, loss: str, index: int) -> dict:
    return dict(p_signed=p, q_ess=q, p_loss=loss, v=voltage.names[t], t=t, index=index,
                r_bess=dev.r_bess, r_cvt=dev.r_cvt, s_max=dev.s_cvt_max / base,
                v_sq_min=voltage.v_sq_min, v_sq_max=voltage.v_sq_max)


def emit_bess_loss_model(dev: EssDevice, h: Horizon, voltage: VoltageRef | None, *,
                         index: int = 0, base_mva: float = 1.0,
                         terminal_soc: bool = False) -> ConstraintBlock:
    """Converter-loss model; the loss rows are nonconvex equalities kept in product form."""
    _check_voltage(voltage, dev, h)
    blk, f = _converter_common(EssModel.BESS_LOSS, dev, h, index, base_mva, voltage, terminal_soc)
    r_eq = dev.r_eq
    for t in range(h.num_periods):
        p, q, loss, v = f["p_signed"][t], f["q_ess"][t], f["p_loss"][t], f["v"][t]
        blk.quadratic(((loss, v, 1.0), (p, p, -r_eq), (q, q, -dev.r_cvt)), {}, "==", 0.0,
                      "loss-equation", nonconvex=True,
                      meta=loss_row_meta(dev, base_mva, voltage, t, p, q, loss, index))
    return _finish(blk, f)


def add_hull_rows(blk: ConstraintBlock, meta: dict, variant: str = "as_printed"):
    """Append the three convex rows that replace one loss equation."""
    if variant not in HULL_VARIANTS:
        raise ValueError(f"hull_variant must be one of {HULL_VARIANTS}")
    p, q, loss, v = meta["p_signed"], meta["q_ess"], meta["p_loss"], meta["v"]
    r_bess, r_cvt = meta["r_bess"], meta["r_cvt"]
    r_eq = r_bess + r_cvt
    s2 = meta["s_max"] ** 2
    vmin, vmax = meta["v_sq_min"], meta["v_sq_max"]
    args = [Affine({loss: 1.0}), Affine({v: 1.0})]
    if r_eq > 0:
        args.append(Affine({p: math.sqrt(r_eq)}))
    if r_cvt > 0:
        args.append(Affine({q: math.sqrt(r_cvt)}))
    blk.cone("rsoc", args, "hull-cone")
    r_q = r_bess if variant == "as_printed" else r_cvt
    quad = ((q, q, r_q),) if r_q > 0 else ()
    blk.quadratic(quad, {loss: vmin}, "<=", r_eq * s2, "hull-reactive")
    blk.linear({v: s2, loss: vmin * vmax}, "<=", s2 * (vmin + vmax), "hull-voltage")


def emit_bess_convex_model(dev: EssDevice, h: Horizon, voltage: VoltageRef | None, *,
                           index: int = 0, base_mva: float = 1.0, terminal_soc: bool = False,
                           hull_variant: str = "as_printed") -> ConstraintBlock:
    """Convex-hull relaxation of the converter-loss model."""
    _check_voltage(voltage, dev, h)
    if not voltage.v_sq_min < voltage.v_sq_max:
        raise ValueError("hull relaxation needs v_sq_min < v_sq_max at the device bus")
    blk, f = _converter_common(EssModel.BESS_CONVEX, dev, h, index, base_mva, voltage, terminal_soc)
    blk.meta["hull_variant"] = hull_variant
    for t in range(h.num_periods):
        meta = loss_row_meta(dev, base_mva, voltage, t, f["p_signed"][t], f["q_ess"][t],
                             f["p_loss"][t], index)
        add_hull_rows(blk, meta, hull_variant)
    return _finish(blk, f)


def emit_model(model: EssModel | str, dev: EssDevice, h: Horizon, *, index: int = 0,
               base_mva: float = 1.0, voltage: VoltageRef | None = None,
               terminal_soc: bool = False, hull_variant: str = "as_printed") -> ConstraintBlock:
    model = EssModel(model)
    kw = dict(index=index, base_mva=base_mva, terminal_soc=terminal_soc)
    if model is EssModel.MILP:
        return emit_milp_model(dev, h, **kw)
    if model is EssModel.LINEAR:
        return emit_linear_model(dev, h, **kw)
    if model is EssModel.COMPLEMENTARITY:
        return emit_complementarity_model(dev, h, **kw)
    if model is EssModel.BESS_LOSS:
        return emit_bess_loss_model(dev, h, voltage, **kw)
    return emit_bess_convex_model(dev, h, voltage, hull_variant=hull_variant, **kw)


# --------------------------------------------------------------------------
# SOC arithmetic
# --------------------------------------------------------------------------

def soc_trajectory(dev: EssDevice, p_store_series: Sequence[float], h: Horizon) -> np.ndarray:
    """Stored energy at the end of each period, MWh. No bound checks."""
    series = np.asarray(p_store_series, dtype=float)
    if series.shape != (h.num_periods,):
        raise ValueError(f"series has shape {series.shape}, expected ({h.num_periods},)")
    return dev.e_init + h.dt_hours * np.cumsum(series)


def store_power(model: EssModel | str, dev: EssDevice, *, p_ch=None, p_disch=None,
                p_signed=None, p_loss=None) -> np.ndarray:
    """Reservoir power per the sign convention table, recomputed from raw powers."""
    model = EssModel(model)
    if model in (EssModel.MILP, EssModel.COMPLEMENTARITY):
        return dev.eta_ch * np.asarray(p_ch, float) - np.asarray(p_disch, float) / dev.eta_disch
    if model is EssModel.LINEAR:
        return -np.asarray(p_signed, float)
    return -(np.asarray(p_signed, float) + np.asarray(p_loss, float))
