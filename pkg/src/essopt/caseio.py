"""Reading and writing the section-oriented case format (see FORMAT.md)."""
from __future__ import annotations

import logging
import math
from pathlib import Path

import numpy as np

from .grid import (Branch, Bus, EssDevice, Generator, Horizon, Network,
                   scale_load_profile, validate_network)

log = logging.getLogger(__name__)

SECTIONS = ("meta", "buses", "branches", "generators", "storage", "loads")
_SQ_PREFIX = "sq:"


class CaseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _num(tok: str, lineno: int) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise CaseError(f"expected a number, got {tok!r}", lineno) from None
    if not math.isfinite(v):
        raise CaseError(f"non-finite value {tok!r}", lineno)
    return v


def _int(tok: str, lineno: int) -> int:
    try:
        return int(tok)
    except ValueError:
        raise CaseError(f"expected an integer, got {tok!r}", lineno) from None


def _vsq(tok: str, lineno: int) -> float:
    # plain magnitudes are squared; "sq:" marks an already-squared value (lossless round trip)
    if tok.startswith(_SQ_PREFIX):
        return _num(tok[len(_SQ_PREFIX):], lineno)
    return _num(tok, lineno) ** 2


def _fields(parts, lineno, lo, hi, what):
    if not lo <= len(parts) <= hi:
        want = str(lo) if lo == hi else f"{lo}-{hi}"
        raise CaseError(f"{what} record needs {want} fields, got {len(parts)}", lineno)


def parse_case(text: str) -> Network:
    """Parse case text into a validated :class:`Network`.

    Raises :class:`CaseError` on syntax errors (with line number) and on any
    invariant violation. A meshed topology only logs a warning.
    """
    meta: dict[str, list[str]] = {}
    buses, branches, gens, devices = [], [], [], []
    load_rows: list[tuple[int, int, str, float, float]] = []
    origin: dict[str, int] = {}
    section = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise CaseError(f"malformed section header {line!r}", lineno)
            section = line[1:-1].strip().lower()
            if section not in SECTIONS:
                raise CaseError(f"unknown section [{section}]", lineno)
            continue
        if section is None:
            raise CaseError("record outside of any section", lineno)
        parts = line.split()

        if section == "meta":
            if len(parts) < 2:
                raise CaseError("meta record needs a key and a value", lineno)
            meta[parts[0]] = parts[1:]
            origin[f"meta {parts[0]}"] = lineno
        elif section == "buses":
            _fields(parts, lineno, 2, 4, "bus")
            bid = _int(parts[0], lineno)
            kind = parts[1].lower()
            vmin = _vsq(parts[2], lineno) if len(parts) > 2 else 0.81
            vmax = _vsq(parts[3], lineno) if len(parts) > 3 else 1.21
            buses.append(Bus(bid, vmin, vmax, kind))
            origin[f"bus {bid}"] = lineno
        elif section == "branches":
            _fields(parts, lineno, 5, 5, "branch")
            f, t = _int(parts[0], lineno), _int(parts[1], lineno)
            r, x, lim = (_num(p, lineno) for p in parts[2:5])
            origin[f"branch {len(branches)} ({f}-{t})"] = lineno
            branches.append(Branch(f, t, r, x, lim))
        elif section == "generators":
            _fields(parts, lineno, 3, 8, "generator")
            bus = _int(parts[0], lineno)
            vals = [_num(p, lineno) for p in parts[1:]] + [0.0] * (7 - (len(parts) - 1))
            origin[f"generator {len(gens)} at bus {bus}"] = lineno
            gens.append(Generator(bus, *vals))
        elif section == "storage":
            _fields(parts, lineno, 11, 12, "storage")
            bus = _int(parts[0], lineno)
            vals = [_num(p, lineno) for p in parts[1:11]]
            tag = parts[11].upper() if len(parts) > 11 else "GENERIC"
            origin[f"device {len(devices)} at bus {bus}"] = lineno
            devices.append(EssDevice(bus, *vals, tech_tag=tag))
        elif section == "loads":
            _fields(parts, lineno, 3, 4, "load")
            bus = _int(parts[0], lineno)
            period = parts[1]
            p = _num(parts[2], lineno)
            q = _num(parts[3], lineno) if len(parts) > 3 else 0.0
            load_rows.append((lineno, bus, period, p, q))

    def meta_num(key, default, cast=float):
        if key not in meta:
            return default
        try:
            return cast(meta[key][0])
        except ValueError:
            raise CaseError(f"bad value for {key}", origin[f"meta {key}"]) from None

    base_mva = meta_num("base_mva", 100.0)
    num_periods = meta_num("num_periods", 1, int)
    dt_hours = meta_num("dt_hours", 1.0)
    try:
        horizon = Horizon(num_periods, dt_hours)
    except ValueError as exc:
        raise CaseError(str(exc), origin.get("meta num_periods")) from None

    shape = None
    if "load_shape" in meta:
        lineno = origin["meta load_shape"]
        shape = [_num(tok, lineno) for tok in meta["load_shape"]]
        try:
            scale_load_profile([0.0], shape, num_periods)
        except ValueError as exc:
            raise CaseError(str(exc), lineno) from None

    index = {b.id: i for i, b in enumerate(buses)}
    P = np.zeros((len(buses), num_periods))
    Q = np.zeros((len(buses), num_periods))
    for lineno, bus, period, p, q in load_rows:
        if bus not in index:
            raise CaseError(f"load references unknown bus {bus}", lineno)
        i = index[bus]
        if period == "*":
            factors = shape if shape is not None else [1.0] * num_periods
            P[i] += scale_load_profile([p], factors)[0]
            Q[i] += scale_load_profile([q], factors)[0]
        else:
            t = _int(period, lineno)
            if not 0 <= t < num_periods:
                raise CaseError(f"period {t} outside 0..{num_periods - 1}", lineno)
            P[i, t] += p
            Q[i, t] += q

    net = Network(buses, branches, gens, devices, P.tolist(), Q.tolist(), base_mva, horizon)
    report = validate_network(net)
    if report.errors:
        first = report.errors[0]
        msg = "; ".join(f"{v.subject}: {v.message}" for v in report.errors)
        raise CaseError(msg, origin.get(first.subject))
    for w in report.warnings:
        log.warning("%s: %s", w.subject, w.message)
    return net


def load_case(path: str | Path) -> Network:
    return parse_case(Path(path).read_text(encoding="utf-8"))


def _f(v: float) -> str:
    return repr(float(v))


def serialize_case(net: Network) -> str:
    """Inverse of :func:`parse_case`: ``parse_case(serialize_case(n)) == n``."""
    h = net.horizon
    lines = ["[meta]",
             f"base_mva {_f(net.base_mva)}",
             f"num_periods {h.num_periods}",
             f"dt_hours {_f(h.dt_hours)}",
             "",
             "[buses]",
             "# id kind v_min v_max"]
    for b in net.buses:
        lines.append(f"{b.id} {b.bus_kind} {_SQ_PREFIX}{_f(b.v_sq_min)} {_SQ_PREFIX}{_f(b.v_sq_max)}")
    lines += ["", "[branches]", "# from to r x flow_limit"]
    for br in net.branches:
        lines.append(" ".join([str(br.from_bus), str(br.to_bus)] +
                              [_f(v) for v in (br.resistance, br.reactance, br.flow_limit)]))
    lines += ["", "[generators]", "# bus p_min p_max q_min q_max c2 c1 c0"]
    for g in net.generators:
        vals = (g.p_min, g.p_max, g.q_min, g.q_max, g.cost_quadratic, g.cost_linear, g.cost_constant)
        lines.append(" ".join([str(g.bus)] + [_f(v) for v in vals]))
    lines += ["", "[storage]",
              "# bus p_ch_max p_disch_max e_min e_max e_init eta_ch eta_disch r_bess r_cvt s_cvt_max tech"]
    for d in net.devices:
        vals = (d.p_ch_max, d.p_disch_max, d.e_min, d.e_max, d.e_init, d.eta_ch, d.eta_disch,
                d.r_bess, d.r_cvt, d.s_cvt_max)
        lines.append(" ".join([str(d.bus)] + [_f(v) for v in vals] + [d.tech_tag]))
    lines += ["", "[loads]", "# bus period p_mw q_mvar"]
    for b, prow, qrow in zip(net.buses, net.load_active, net.load_reactive):
        if len(set(prow)) == 1 and len(set(qrow)) == 1:
            if prow[0] != 0.0 or qrow[0] != 0.0:
                lines.append(f"{b.id} * {_f(prow[0])} {_f(qrow[0])}")
            continue
        for t, (p, q) in enumerate(zip(prow, qrow)):
            if p != 0.0 or q != 0.0:
                lines.append(f"{b.id} {t} {_f(p)} {_f(q)}")
    return "\n".join(lines) + "\n"
