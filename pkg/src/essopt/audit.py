"""Model-independent audit of storage schedules and sampling checks of the hull rows.

Everything here works in natural units (MW, MVAr, MWh) and recomputes state
of charge from the powers; nothing is taken from solver bookkeeping.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .ess import EssModel, HULL_VARIANTS, soc_trajectory, store_power
from .grid import Bus, EssDevice, Horizon

FIELDS = ("p_ch", "p_disch", "p_signed", "p_net", "q_ess", "p_loss", "soc")
CSV_COLUMNS = ("device", "t", "p_ch", "p_disch", "p_net", "soc", "q_ess", "p_loss",
               "model", "p_signed", "v_sq")


@dataclass
class DispatchSchedule:
    """Per-device, per-period storage quantities, arrays of shape ``(n_devices, T)``.

    ``v_sq`` is the squared voltage magnitude at each device's bus, NaN where
    the network model has none. ``p_net`` is the model's own net-power
    variable: power into the reservoir for milp, complementarity and linear
    (where it equals ``-p_signed``); reservoir outflow ``p_signed + p_loss``
    for the converter models.
    """

    models: tuple[str, ...]
    p_ch: np.ndarray
    p_disch: np.ndarray
    p_signed: np.ndarray
    p_net: np.ndarray
    q_ess: np.ndarray
    p_loss: np.ndarray
    soc: np.ndarray
    v_sq: np.ndarray
    base_mva: float = 1.0

    def __post_init__(self):
        self.models = tuple(EssModel(m).value for m in self.models)
        shape = None
        for name in (*FIELDS, "v_sq"):
            arr = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            if shape is None:
                shape = arr.shape
            elif arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            setattr(self, name, arr)
        if shape[0] != len(self.models):
            raise ValueError(f"{len(self.models)} models for {shape[0]} devices")

    @property
    def num_devices(self) -> int:
        return len(self.models)

    @property
    def num_periods(self) -> int:
        return self.p_ch.shape[1]

    @classmethod
    def zeros(cls, models, num_periods: int, devices=None, base_mva: float = 1.0) -> "DispatchSchedule":
        """Idle schedule; SOC stays at ``e_init`` when ``devices`` is given."""
        n = len(models)
        zeros = [np.zeros((n, num_periods)) for _ in range(7)]
        if devices is not None:
            zeros[6] += np.array([[d.e_init] for d in devices])
        return cls(tuple(models), *zeros, np.full((n, num_periods), np.nan), base_mva)


def extract_schedule(p, sol) -> DispatchSchedule:
    """Convert a solution of an assembled problem to natural units."""
    T = p.horizon.num_periods
    base = p.base_mva
    rows = {k: [] for k in (*FIELDS, "v_sq")}
    models = []
    for dev in p.devices:
        m = EssModel(dev["model"])
        f = dev["fields"]
        models.append(m.value)

        def get(name, scale=base):
            if name not in f:
                return None
            return np.array([sol.values[v] for v in f[name]]) * scale

        zero = np.zeros(T)
        soc = get("soc")
        if m in (EssModel.MILP, EssModel.COMPLEMENTARITY):
            p_ch, p_dis, p_net = get("p_ch"), get("p_disch"), get("p_net")
            p_signed, q, loss, v = p_dis - p_ch, zero, zero, np.full(T, np.nan)
        elif m is EssModel.LINEAR:
            p_signed = get("p_signed")
            p_ch, p_dis = np.maximum(0.0, -p_signed), np.maximum(0.0, p_signed)
            p_net, q, loss, v = -p_signed, zero, zero, np.full(T, np.nan)
        else:
            p_signed, q, loss, p_net = get("p_signed"), get("q_ess"), get("p_loss"), get("p_net")
            p_ch, p_dis = np.maximum(0.0, -p_signed), np.maximum(0.0, p_signed)
            v = get("v", 1.0)
        for k, arr in zip((*FIELDS, "v_sq"), (p_ch, p_dis, p_signed, p_net, q, loss, soc, v)):
            rows[k].append(arr)
    if not models:
        empty = np.zeros((0, T))
        return DispatchSchedule((), *(empty for _ in range(8)), base_mva=base)
    return DispatchSchedule(tuple(models), *(np.vstack(rows[k]) for k in (*FIELDS, "v_sq")),
                            base_mva=base)


# --------------------------------------------------------------------------
# audit
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class AuditTolerances:
    """Absolute tolerances in natural units (MW, MVA, MWh)."""

    power: float = 1e-8
    soc: float = 1e-8
    complementarity: float = 1e-6
    loss: float = 1e-8

    @classmethod
    def uniform(cls, tol: float) -> "AuditTolerances":
        return cls(tol, tol, tol, tol)

    def __post_init__(self):
        for name in ("power", "soc", "complementarity", "loss"):
            if not getattr(self, name) > 0:
                raise ValueError(f"tolerance {name} must be positive")


@dataclass(frozen=True)
class FamilyResult:
    device: int
    family: str
    worst: float
    period: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.worst <= self.tolerance


@dataclass
class AuditReport:
    results: list[FamilyResult] = field(default_factory=list)
    complementarity: dict[int, float] = field(default_factory=dict)
    soc: dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def failures(self) -> list[FamilyResult]:
        return [r for r in self.results if not r.passed]

    def worst(self, family: str, device: int | None = None) -> float:
        vals = [r.worst for r in self.results
                if r.family == family and (device is None or r.device == device)]
        return max(vals, default=0.0)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("device", "family", "worst_violation", "period", "tolerance", "pass"))
        for r in self.results:
            w.writerow((r.device, r.family, repr(float(r.worst)), r.period, repr(float(r.tolerance)),
                        "pass" if r.passed else "fail"))
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [f"audit: {'PASS' if self.passed else 'FAIL'}"]
        for r in self.results:
            flag = "ok  " if r.passed else "FAIL"
            lines.append(f"  {flag} device {r.device} {r.family:<16} worst {r.worst:.3e} "
                         f"at t={r.period} (tol {r.tolerance:.1e})")
        for k, v in self.complementarity.items():
            lines.append(f"  device {k} sum_t min(p_ch, p_disch) = {v:.3e} MW")
        return "\n".join(lines) + "\n"


def _worst(values: np.ndarray) -> tuple[float, int]:
    values = np.asarray(values, float)
    if values.size == 0:
        return 0.0, -1
    bad = np.where(np.isnan(values), np.inf, values)
    t = int(np.argmax(bad))
    return max(0.0, float(bad[t])), (t if bad[t] > 0 else -1)


def audit_schedule(s: DispatchSchedule, devices, h: Horizon, tolerances: AuditTolerances | None = None,
                   *, terminal_soc: bool = False) -> AuditReport:
    """Check every constraint family of each device's model directly.

    Families: ``power-bounds``, ``net-power``, ``soc-band``, ``soc-consistency``,
    ``complementarity`` (all models), plus ``converter-rating`` and
    ``loss-equation`` for the converter models and ``terminal-soc`` on request.
    """
    tol = tolerances or AuditTolerances()
    devices = list(devices)
    if len(devices) != s.num_devices:
        raise ValueError(f"schedule has {s.num_devices} devices, got {len(devices)} device records")
    if s.num_periods != h.num_periods:
        raise ValueError(f"schedule has {s.num_periods} periods, horizon has {h.num_periods}")
    rep = AuditReport()

    def add(k, family, viol, t_tol):
        worst, t = _worst(viol)
        rep.results.append(FamilyResult(k, family, worst, t, t_tol))

    for k, (dev, model) in enumerate(zip(devices, s.models)):
        m = EssModel(model)
        p_ch, p_dis, p_sig = s.p_ch[k], s.p_disch[k], s.p_signed[k]
        p_net, q, loss = s.p_net[k], s.q_ess[k], s.p_loss[k]

        if m in (EssModel.MILP, EssModel.COMPLEMENTARITY):
            bounds = np.maximum.reduce([-p_ch, p_ch - dev.p_ch_max, -p_dis, p_dis - dev.p_disch_max])
            net = np.abs(p_net - (dev.eta_ch * p_ch - p_dis / dev.eta_disch))
            store = store_power(m, dev, p_ch=p_ch, p_disch=p_dis)
        elif m is EssModel.LINEAR:
            bounds = np.maximum(-dev.p_ch_max - p_sig, p_sig - dev.p_disch_max)
            net = np.abs(p_net + p_sig)
            store = store_power(m, dev, p_signed=p_sig)
        else:
            s_max = dev.s_cvt_max
            bounds = np.maximum.reduce([np.abs(p_sig) - s_max, np.abs(q) - s_max, -loss])
            net = np.abs(p_net - (p_sig + loss))
            store = store_power(m, dev, p_signed=p_sig, p_loss=loss)
        add(k, "power-bounds", bounds, tol.power)
        add(k, "net-power", net, tol.power)

        soc = soc_trajectory(dev, store, h)
        rep.soc[k] = soc
        add(k, "soc-band", np.maximum(dev.e_min - soc, soc - dev.e_max), tol.soc)
        add(k, "soc-consistency", np.abs(s.soc[k] - soc), tol.soc)
        if terminal_soc:
            add(k, "terminal-soc", np.abs(soc[-1:] - dev.e_init), tol.soc)

        mins = np.maximum(0.0, np.minimum(p_ch, p_dis))
        rep.complementarity[k] = float(mins.sum())
        worst_t = int(np.argmax(mins)) if mins.size and mins.max() > 0 else -1
        rep.results.append(FamilyResult(k, "complementarity", float(mins.sum()), worst_t,
                                        tol.complementarity))

        if m.needs_voltage:
            add(k, "converter-rating", np.hypot(p_sig, q) - dev.s_cvt_max, tol.power)
            v = s.v_sq[k]
            if np.any(np.isnan(v)):
                raise ValueError(f"device {k} uses a converter model but the schedule has no voltage")
            base = s.base_mva
            g = (loss / base) * v - dev.r_eq * (p_sig / base) ** 2 - dev.r_cvt * (q / base) ** 2
            add(k, "loss-equation", np.abs(g) * base, tol.loss)
    return rep


def relaxation_gap(s: DispatchSchedule, device: int, dev: EssDevice) -> np.ndarray:
    """Per-period ``p_loss * V - r_eq * p_signed^2 - r_cvt * q_ess^2`` in per-unit."""
    v = s.v_sq[device]
    if np.any(np.isnan(v)):
        raise ValueError("schedule has no voltage for this device")
    base = s.base_mva
    return (s.p_loss[device] / base) * v - dev.r_eq * (s.p_signed[device] / base) ** 2 \
        - dev.r_cvt * (s.q_ess[device] / base) ** 2


# --------------------------------------------------------------------------
# CSV round trip
# --------------------------------------------------------------------------

def schedule_to_csv(s: DispatchSchedule) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for k in range(s.num_devices):
        for t in range(s.num_periods):
            w.writerow([k, t] + [repr(float(getattr(s, c)[k, t])) for c in
                                 ("p_ch", "p_disch", "p_net", "soc", "q_ess", "p_loss")]
                       + [s.models[k], repr(float(s.p_signed[k, t])), repr(float(s.v_sq[k, t]))])
    return buf.getvalue()


def schedule_from_csv(text: str, base_mva: float = 1.0) -> DispatchSchedule:
    """Parse :func:`schedule_to_csv` output. Missing optional columns default sensibly."""
    reader = csv.DictReader(io.StringIO(text))
    required = CSV_COLUMNS[:8]
    if reader.fieldnames is None or any(c not in reader.fieldnames for c in required):
        raise ValueError(f"schedule CSV needs columns {', '.join(required)}")
    rows = list(reader)
    if not rows:
        raise ValueError("schedule CSV has no rows")
    n = max(int(r["device"]) for r in rows) + 1
    T = max(int(r["t"]) for r in rows) + 1
    arrays = {c: np.full((n, T), np.nan) for c in (*FIELDS, "v_sq")}
    models = ["linear"] * n
    seen = np.zeros((n, T), bool)
    for r in rows:
        k, t = int(r["device"]), int(r["t"])
        seen[k, t] = True
        for c in ("p_ch", "p_disch", "p_net", "soc", "q_ess", "p_loss"):
            arrays[c][k, t] = float(r[c])
        models[k] = r.get("model") or "milp"
        arrays["p_signed"][k, t] = (float(r["p_signed"]) if r.get("p_signed") not in (None, "")
                                    else float(r["p_disch"]) - float(r["p_ch"]))
        arrays["v_sq"][k, t] = float(r["v_sq"]) if r.get("v_sq") not in (None, "") else math.nan
    if not seen.all():
        raise ValueError("schedule CSV does not cover every (device, t) pair")
    return DispatchSchedule(tuple(models), *(arrays[c] for c in (*FIELDS, "v_sq")), base_mva=base_mva)


# --------------------------------------------------------------------------
# hull containment sampling
# --------------------------------------------------------------------------

@dataclass
class ContainmentReport:
    n_samples: int
    seed: int
    variant: str
    counts: dict[str, int]
    max_violation: dict[str, float]
    worst_sample: dict[str, dict[str, float] | None]
    threshold: float

    def to_text(self) -> str:
        lines = [f"hull containment: {self.n_samples} samples, seed {self.seed}, variant {self.variant}"]
        for row in self.counts:
            lines.append(f"  {row:<14} violations {self.counts[row]:>7d}  max {self.max_violation[row]:.3e}")
            if self.worst_sample[row] is not None:
                ws = self.worst_sample[row]
                lines.append("    worst: " + " ".join(f"{k}={v!r}" for k, v in ws.items()))
        return "\n".join(lines) + "\n"


def hull_containment_sample(dev: EssDevice, bus: Bus, n_samples: int, seed: int, *,
                            base_mva: float = 1.0, variant: str = "as_printed",
                            threshold: float = 1e-9) -> ContainmentReport:
    """Sample the loss surface inside the voltage band and converter disc; test the hull rows.

    ``(p, q)`` is area-uniform in the disc of radius ``s_cvt_max`` (per-unit on
    ``base_mva``), ``V`` uniform in ``[v_sq_min, v_sq_max]``, and ``p_loss`` is
    taken from the loss equation. A row counts as violated when its excess
    (left side minus right side, per-unit) exceeds ``threshold``.
    """
    if not bus.v_sq_min < bus.v_sq_max:
        raise ValueError("need v_sq_min < v_sq_max")
    if not dev.s_cvt_max > 0:
        raise ValueError("need s_cvt_max > 0")
    if variant not in HULL_VARIANTS:
        raise ValueError(f"variant must be one of {HULL_VARIANTS}")
    rng = np.random.default_rng(seed)
    s = dev.s_cvt_max / base_mva
    u, theta, w = rng.random(n_samples), rng.random(n_samples), rng.random(n_samples)
    r = s * np.sqrt(u)
    p = r * np.cos(2 * np.pi * theta)
    q = r * np.sin(2 * np.pi * theta)
    vmin, vmax = bus.v_sq_min, bus.v_sq_max
    v = vmin + (vmax - vmin) * w
    r_eq, r_cvt = dev.r_eq, dev.r_cvt
    loss = (r_eq * p * p + r_cvt * q * q) / v
    r_q = dev.r_bess if variant == "as_printed" else r_cvt
    s2 = s * s
    excess = {
        "hull-cone": r_eq * p * p + r_cvt * q * q - loss * v,
        "hull-reactive": loss * vmin + r_q * q * q - r_eq * s2,
        "hull-voltage": s2 * v + loss * vmin * vmax - s2 * (vmin + vmax),
    }
    counts, maxv, worst = {}, {}, {}
    for name, e in excess.items():
        counts[name] = int(np.count_nonzero(e > threshold))
        i = int(np.argmax(e)) if e.size else 0
        maxv[name] = max(0.0, float(e[i])) if e.size else 0.0
        worst[name] = (dict(p_signed=float(p[i]), q_ess=float(q[i]), v_sq=float(v[i]),
                            p_loss=float(loss[i]), excess=float(e[i]))
                       if e.size and e[i] > threshold else None)
    return ContainmentReport(n_samples, seed, variant, counts, maxv, worst, threshold)
