"""Network, device and horizon types plus load-profile scaling and validation.

All types are frozen dataclasses. Construction never raises for network-level
invariants; :func:`validate_network` reports them as data so that a broken
network can still be inspected. :class:`Horizon` is the exception because a
horizon with no periods is meaningless everywhere downstream.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

BUS_KINDS = ("slack", "pq", "pv")
TECH_TAGS = ("PHS", "CAES", "FES", "BESS", "SC", "TESS", "SMES", "HES", "GENERIC")


@dataclass(frozen=True)
class Horizon:
    num_periods: int
    dt_hours: float

    def __post_init__(self):
        if int(self.num_periods) != self.num_periods or self.num_periods < 1:
            raise ValueError(f"num_periods must be a positive integer, got {self.num_periods}")
        if not self.dt_hours > 0:
            raise ValueError(f"dt_hours must be positive, got {self.dt_hours}")

    @property
    def periods(self) -> range:
        return range(self.num_periods)


@dataclass(frozen=True)
class Bus:
    id: int
    v_sq_min: float = 0.81
    v_sq_max: float = 1.21
    bus_kind: str = "pq"


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    resistance: float
    reactance: float
    flow_limit: float


@dataclass(frozen=True)
class Generator:
    bus: int
    p_min: float
    p_max: float
    q_min: float = 0.0
    q_max: float = 0.0
    cost_quadratic: float = 0.0
    cost_linear: float = 0.0
    cost_constant: float = 0.0


@dataclass(frozen=True)
class EssDevice:
    """One storage unit. Powers in MW/MVA, energies in MWh, resistances per-unit."""

    bus: int
    p_ch_max: float
    p_disch_max: float
    e_min: float
    e_max: float
    e_init: float
    eta_ch: float = 1.0
    eta_disch: float = 1.0
    r_bess: float = 0.0
    r_cvt: float = 0.0
    s_cvt_max: float = 1.0
    tech_tag: str = "GENERIC"

    @property
    def r_eq(self) -> float:
        return self.r_bess + self.r_cvt


@dataclass(frozen=True)
class Network:
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    devices: tuple[EssDevice, ...]
    load_active: tuple[tuple[float, ...], ...]
    load_reactive: tuple[tuple[float, ...], ...]
    base_mva: float = 100.0
    horizon: Horizon = field(default_factory=lambda: Horizon(1, 1.0))

    def __post_init__(self):
        # callers pass lists and arrays freely; store tuples so the object stays hashable
        for name in ("buses", "branches", "generators", "devices"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        for name in ("load_active", "load_reactive"):
            rows = tuple(tuple(float(v) for v in row) for row in getattr(self, name))
            object.__setattr__(self, name, rows)

    @property
    def bus_ids(self) -> list[int]:
        return [b.id for b in self.buses]

    def bus_index(self, bus_id: int) -> int:
        for i, b in enumerate(self.buses):
            if b.id == bus_id:
                return i
        raise KeyError(bus_id)

    def bus(self, bus_id: int) -> Bus:
        return self.buses[self.bus_index(bus_id)]

    @property
    def slack(self) -> Bus:
        for b in self.buses:
            if b.bus_kind == "slack":
                return b
        raise ValueError("network has no slack bus")

    def loads_p(self) -> np.ndarray:
        return np.array(self.load_active, dtype=float).reshape(len(self.buses), -1)

    def loads_q(self) -> np.ndarray:
        return np.array(self.load_reactive, dtype=float).reshape(len(self.buses), -1)

    def replace(self, **changes) -> "Network":
        from dataclasses import replace

        return replace(self, **changes)


def broadcast_loads(snapshot: Sequence[float], num_periods: int) -> tuple[tuple[float, ...], ...]:
    """Repeat a single-period load vector across every period."""
    return tuple(tuple(float(v) for _ in range(num_periods)) for v in snapshot)


def scale_load_profile(base_load: Sequence[float], shape: Sequence[float],
                       num_periods: int | None = None) -> np.ndarray:
    """Outer product ``base_load[b] * shape[t]``.

    Raises ``ValueError`` if any factor is negative or if ``num_periods`` is
    given and disagrees with ``len(shape)``.
    """
    base = np.asarray(base_load, dtype=float).ravel()
    factors = np.asarray(shape, dtype=float).ravel()
    if num_periods is not None and factors.size != num_periods:
        raise ValueError(f"shape has {factors.size} factors, horizon has {num_periods} periods")
    if np.any(factors < 0):
        raise ValueError("load shape factors must be nonnegative")
    return np.outer(base, factors)


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    level: str  # "error" or "warning"
    subject: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def errors(self) -> list[Violation]:
        return [v for v in self.violations if v.level == "error"]

    @property
    def warnings(self) -> list[Violation]:
        return [v for v in self.violations if v.level == "warning"]

    @property
    def ok(self) -> bool:
        return not self.errors

    def __len__(self):
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)


class _DisjointSet:
    def __init__(self, items):
        self.parent = {i: i for i in items}

    def find(self, i):
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[ra] = rb
        return True


def is_radial(bus_ids: Sequence[int], branches: Sequence[Branch]) -> bool:
    """True iff the branches form a spanning tree over ``bus_ids``."""
    if len(branches) != len(bus_ids) - 1:
        return False
    ds = _DisjointSet(bus_ids)
    for br in branches:
        if br.from_bus not in ds.parent or br.to_bus not in ds.parent:
            return False
        if not ds.union(br.from_bus, br.to_bus):
            return False
    return True


def _finite(*values) -> bool:
    return all(isinstance(v, (int, float)) and math.isfinite(v) for v in values)


def validate_network(net: Network) -> ValidationReport:
    """Collect every invariant violation of ``net``; never raises, never mutates."""
    out: list[Violation] = []

    def err(subject, msg):
        out.append(Violation("error", subject, msg))

    ids = [b.id for b in net.buses]
    idset = set(ids)
    if len(idset) != len(ids):
        err("buses", "duplicate bus ids")
    if not net.base_mva > 0:
        err("meta", f"base_mva must be positive, got {net.base_mva}")

    slacks = [b for b in net.buses if b.bus_kind == "slack"]
    if len(slacks) != 1:
        err("buses", f"expected exactly one slack bus, found {len(slacks)}")
    for b in net.buses:
        subj = f"bus {b.id}"
        if b.bus_kind not in BUS_KINDS:
            err(subj, f"unknown bus kind {b.bus_kind!r}")
        if not (_finite(b.v_sq_min, b.v_sq_max) and 0 < b.v_sq_min <= b.v_sq_max):
            err(subj, "requires 0 < v_sq_min <= v_sq_max")

    for k, br in enumerate(net.branches):
        subj = f"branch {k} ({br.from_bus}-{br.to_bus})"
        for end in (br.from_bus, br.to_bus):
            if end not in idset:
                err(subj, f"references unknown bus {end}")
        if br.from_bus == br.to_bus:
            err(subj, "self-loop")
        if br.resistance < 0 or br.reactance < 0:
            err(subj, "resistance and reactance must be nonnegative")
        if not br.resistance + br.reactance > 0:
            err(subj, "resistance + reactance must be positive")
        if not br.flow_limit > 0:
            err(subj, "flow_limit must be positive")

    for k, g in enumerate(net.generators):
        subj = f"generator {k} at bus {g.bus}"
        if g.bus not in idset:
            err(subj, f"references unknown bus {g.bus}")
        if g.p_min > g.p_max:
            err(subj, "p_min > p_max")
        if g.q_min > g.q_max:
            err(subj, "q_min > q_max")
        if g.cost_quadratic < 0:
            err(subj, "cost_quadratic must be nonnegative")

    for k, d in enumerate(net.devices):
        subj = f"device {k} at bus {d.bus}"
        if d.bus not in idset:
            err(subj, f"references unknown bus {d.bus}")
        if not (0 <= d.e_min <= d.e_init <= d.e_max):
            err(subj, "requires 0 <= e_min <= e_init <= e_max")
        if not (0 < d.eta_ch <= 1 and 0 < d.eta_disch <= 1):
            err(subj, "efficiencies must lie in (0, 1]")
        if not (d.p_ch_max > 0 and d.p_disch_max > 0):
            err(subj, "power ratings must be positive")
        if d.r_bess < 0 or d.r_cvt < 0:
            err(subj, "resistances must be nonnegative")
        if not d.s_cvt_max > 0:
            err(subj, "s_cvt_max must be positive")
        if d.tech_tag not in TECH_TAGS:
            err(subj, f"unknown tech tag {d.tech_tag!r}")

    T = net.horizon.num_periods
    for name, rows in (("load_active", net.load_active), ("load_reactive", net.load_reactive)):
        if len(rows) != len(net.buses) or any(len(r) != T for r in rows):
            err(name, f"load matrix must be {len(net.buses)} x {T}")

    if not any(v.subject.startswith("branch") and "unknown bus" in v.message for v in out):
        if net.branches and not is_radial(ids, net.branches):
            out.append(Violation("warning", "topology",
                                 "branches do not form a tree; the branch-flow network block is unavailable"))
    return ValidationReport(tuple(out))
