"""Assembly of network, storage and objective into one problem; classification; model advice."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .blocks import ConeRow, ConstraintBlock, LinearRow, QuadRow, Var, dump_rows
from .ess import EssModel
from .network import NetworkBlockKind, Objective, pbal_key, qbal_key


class AssemblyError(ValueError):
    pass


class ProblemClass(str, Enum):
    LP = "LP"
    QP = "QP"
    SOCP = "SOCP"
    MILP = "MILP"
    MIQP = "MIQP"
    MISOCP = "MISOCP"
    NONCONVEX = "NONCONVEX"


@dataclass(frozen=True)
class CanonicalProblem:
    variables: Mapping[str, Var]
    linear_rows: tuple[LinearRow, ...]
    quad_rows: tuple[QuadRow, ...]
    cone_rows: tuple[ConeRow, ...]
    nonconvex_rows: tuple[QuadRow, ...]
    bilinear_pairs: tuple[tuple[str, str, str], ...]
    binary_vars: tuple[str, ...]
    objective: Objective
    provenance: Mapping[str, tuple[str, str]]
    devices: tuple[dict, ...] = ()
    network_kind: NetworkBlockKind | None = None
    network: object = None
    horizon: object = None
    base_mva: float = 1.0
    options: Mapping = field(default_factory=dict)

    def row_ids(self) -> Iterable[tuple[str, object]]:
        for prefix, rows in (("lin", self.linear_rows), ("quad", self.quad_rows),
                             ("cone", self.cone_rows), ("ncvx", self.nonconvex_rows)):
            for i, r in enumerate(rows):
                yield f"{prefix}{i}", r

    def with_bounds(self, bounds: Mapping[str, tuple[float, float]]) -> "CanonicalProblem":
        vs = dict(self.variables)
        for name, (lb, ub) in bounds.items():
            v = vs[name]
            vs[name] = Var(name, lb, ub, v.binary)
        return replace(self, variables=vs)

    def with_changes(self, **kw) -> "CanonicalProblem":
        return replace(self, **kw)

    def max_violation(self, x: Mapping[str, float], include_nonconvex: bool = True) -> float:
        worst = 0.0
        for v in self.variables.values():
            worst = max(worst, v.lb - x[v.name], x[v.name] - v.ub)
        rows = [*self.linear_rows, *self.quad_rows, *self.cone_rows]
        if include_nonconvex:
            rows += list(self.nonconvex_rows)
        for r in rows:
            worst = max(worst, r.violation(x))
        return worst

    def dump(self) -> str:
        lines = dump_rows("problem", self.variables.values(), self.linear_rows, self.quad_rows,
                          self.cone_rows, self.bilinear_pairs).splitlines()
        lines += [f"ncvx {r.tag}" for r in self.nonconvex_rows]
        lines.append("objective : " + " ".join(f"{c:+.12g}*{v}" for v, c in self.objective.linear.items())
                     + " " + " ".join(f"{c:+.12g}*{u}*{v}" for (u, v), c in self.objective.quad.items())
                     + f" {self.objective.constant:+.12g}")
        lines.append("# provenance")
        lines += [f"{rid} {blk} {tag}" for rid, (blk, tag) in self.provenance.items()]
        return "\n".join(lines) + "\n"


def injection_wiring(ess_blocks: Sequence[ConstraintBlock]) -> list[tuple[str, str, float]]:
    """``(balance row key, variable, coefficient)`` triples for every storage injection."""
    out = []
    for blk in ess_blocks:
        for (bus, t), inj in blk.injections.items():
            for v, c in inj["p"].items():
                out.append((pbal_key(bus, t), v, c))
            for v, c in inj["q"].items():
                out.append((qbal_key(bus, t), v, c))
    return out


def assemble(objective: Objective, network_block: ConstraintBlock,
             ess_blocks: Sequence[ConstraintBlock] = (),
             coupling: Sequence[tuple[str, str, float]] | None = None,
             options: Mapping | None = None) -> CanonicalProblem:
    """Merge blocks into one problem and wire storage injections into nodal balances."""
    net = network_block.meta.get("network")
    h = network_block.meta.get("horizon")
    kind = network_block.meta.get("kind")
    bus_ids = set(net.bus_ids) if net is not None else set()

    for blk in ess_blocks:
        if blk.meta.get("horizon") != h:
            raise AssemblyError(f"block {blk.name} horizon {blk.meta.get('horizon')} != network horizon {h}")
        dev = blk.meta.get("device")
        if dev is not None and dev.bus not in bus_ids:
            raise AssemblyError(f"block {blk.name} sits at unknown bus {dev.bus}")
        model = blk.meta.get("model")
        if model is not None and EssModel(model).needs_voltage and kind is not NetworkBlockKind.BRANCH_FLOW_SOCP:
            raise AssemblyError(f"{EssModel(model).value} storage model needs the branch-flow network block")

    variables: dict[str, Var] = {}
    for blk in (network_block, *ess_blocks):
        for name, v in blk.variables.items():
            if name in variables:
                raise AssemblyError(f"variable {name} declared by two blocks")
            variables[name] = v

    for blk in ess_blocks:
        missing = blk.external_refs() - set(variables)
        if missing:
            raise AssemblyError(f"block {blk.name} references undeclared variables: {sorted(missing)[:3]}")

    wiring = injection_wiring(ess_blocks) if coupling is None else list(coupling)
    extra: dict[str, dict[str, float]] = {}
    for key, v, c in wiring:
        if v not in variables:
            raise AssemblyError(f"wiring references unknown variable {v}")
        slot = extra.setdefault(key, {})
        slot[v] = slot.get(v, 0.0) + c

    linear: list[LinearRow] = []
    quad: list[QuadRow] = []
    cones: list[ConeRow] = []
    ncvx: list[QuadRow] = []
    pairs: list[tuple[str, str, str]] = []
    binaries: list[str] = []
    provenance: dict[str, tuple[str, str]] = {}
    used_keys = set()
    for blk in (network_block, *ess_blocks):
        for r in blk.linear_rows:
            if r.key is not None and r.key in extra:
                coeffs = dict(r.coeffs)
                for v, c in extra[r.key].items():
                    coeffs[v] = coeffs.get(v, 0.0) + c
                r = replace(r, coeffs=coeffs)
                used_keys.add(r.key)
            provenance[f"lin{len(linear)}"] = (blk.name, r.tag)
            linear.append(r)
        for r in blk.quad_rows:
            if r.nonconvex:
                provenance[f"ncvx{len(ncvx)}"] = (blk.name, r.tag)
                ncvx.append(r)
            else:
                provenance[f"quad{len(quad)}"] = (blk.name, r.tag)
                quad.append(r)
        for r in blk.cone_rows:
            provenance[f"cone{len(cones)}"] = (blk.name, r.tag)
            cones.append(r)
        pairs.extend(blk.bilinear_pairs)
        binaries.extend(blk.binary_vars)

    unused = set(extra) - used_keys
    if unused:
        raise AssemblyError(f"network block has no balance rows for {sorted(unused)[:3]} "
                            "(reactive injections need an AC-type network block)")
    missing = objective.variables() - set(variables)
    if missing:
        raise AssemblyError(f"objective references undeclared variables: {sorted(missing)[:3]}")

    devices = tuple(dict(blk.meta) for blk in ess_blocks)
    return CanonicalProblem(variables, tuple(linear), tuple(quad), tuple(cones), tuple(ncvx),
                            tuple(pairs), tuple(binaries), objective, provenance, devices,
                            kind, net, h, net.base_mva if net is not None else 1.0,
                            dict(options or {}))


def classify(p: CanonicalProblem) -> ProblemClass:
    """Binary presence times the highest row class; nonconvexity dominates."""
    if p.nonconvex_rows or p.bilinear_pairs:
        return ProblemClass.NONCONVEX
    if p.cone_rows or p.quad_rows:
        level = "SOCP"
    elif p.objective.quad:
        level = "QP"
    else:
        level = "LP"
    if p.binary_vars:
        level = "MI" + level
    return ProblemClass(level)


# --------------------------------------------------------------------------
# model advice
# --------------------------------------------------------------------------

GRID_LEVELS = ("transmission", "distribution")
DEVICE_KINDS = ("generic", "bess")
ADVISE_NETWORKS = ("ac", "dc", "linac", "distflow")


@dataclass(frozen=True)
class Recommendation:
    models: tuple[int, ...]
    alternatives: tuple[int, ...]
    problem_class: str
    rationale: str

    @property
    def model_names(self) -> tuple[str, ...]:
        return tuple(EssModel.from_number(n).value for n in self.models)

    def headline(self) -> str:
        def join(ns):
            parts = [f"({n})" for n in ns]
            return parts[0] if len(parts) == 1 else ", ".join(parts[:-1]) + " or " + parts[-1]
        word = "model" if len(self.models) == 1 else "models"
        text = f"{word} {join(self.models)}"
        if self.alternatives:
            text += f"; convex alternative {join(self.alternatives)}"
        return text


def advise(network_kind: NetworkBlockKind | str, grid_level: str, device_kind: str = "generic") -> Recommendation:
    """Storage-model recommendation for a network model, grid level and device type.

    ``network_kind`` is one of the block kinds or ``"ac"`` for a full nonlinear
    AC model. The branch-flow relaxation counts as an AC-type model.
    """
    net = network_kind.value if isinstance(network_kind, NetworkBlockKind) else str(network_kind).lower()
    if net not in ADVISE_NETWORKS:
        raise ValueError(f"network must be one of {ADVISE_NETWORKS}")
    if grid_level not in GRID_LEVELS:
        raise ValueError(f"grid level must be one of {GRID_LEVELS}")
    if device_kind not in DEVICE_KINDS:
        raise ValueError(f"device kind must be one of {DEVICE_KINDS}")
    ac_like = net in ("ac", "distflow")

    if grid_level == "distribution":
        if device_kind == "bess":
            return Recommendation(
                (5,), (6,), "NLP",
                "Battery on a distribution feeder: the converter-loss model (5) captures ohmic "
                "losses against bus voltage. Its loss equation is nonconvex; the hull model (6) "
                "keeps the problem convex at the price of a relaxation gap.")
        note = ("" if ac_like else
                " Feeders have low X/R ratios, so a linearized network model is a poor fit here; "
                "prefer an AC-type model.")
        return Recommendation(
            (2, 3, 4), (), "MINLP with (2); NLP with (3) or (4)",
            "Distribution feeder with an AC-type network model: any of the nonconvex-compatible "
            "storage models (2), (3) or (4) may be paired with it. Model (2) adds binaries and "
            "gives the hardest but most detailed problem. No ranking among them is implied." + note)

    if ac_like:
        return Recommendation(
            (3, 4), (), "NLP",
            "Transmission with a nonlinear AC network: choose (3) or (4) so that no integer "
            "variables enter a nonlinear problem. Model (4) tracks charge and discharge "
            "efficiency and is more accurate than (3), but its complementarity pairs cost more "
            "to solve.")
    return Recommendation(
        (2, 3), (), "LP with (3); MILP with (2)",
        "Transmission with a linearized network: (3) keeps the whole problem an LP; (2) turns "
        "it into a MILP that is harder to solve but models efficiencies and mode exclusivity.")


def emit_blocks(net, ess_model: EssModel | str | Sequence[EssModel | str],
                network_kind: NetworkBlockKind | str = NetworkBlockKind.DC,
                objective: str = "cost", prices: Sequence[float] | None = None, *,
                terminal_soc: bool = False, hull_variant: str = "as_printed"):
    """Network block, one storage block per device, and the objective, unassembled.

    ``ess_model`` is one model for all devices or one per device.
    """
    from .ess import emit_model
    from .network import emit_network, emit_objective, voltage_ref

    h = net.horizon
    nblk = emit_network(network_kind, net, h)
    models = ([ess_model] * len(net.devices) if isinstance(ess_model, (str, EssModel))
              else list(ess_model))
    if len(models) != len(net.devices):
        raise ValueError(f"{len(models)} storage models for {len(net.devices)} devices")
    blocks = []
    for i, (dev, m) in enumerate(zip(net.devices, models)):
        m = EssModel(m)
        vref = voltage_ref(nblk, dev.bus) if m.needs_voltage else None
        if m.needs_voltage and vref is None:
            raise AssemblyError(f"{m.value} storage model needs the branch-flow network block")
        blocks.append(emit_model(m, dev, h, index=i, base_mva=net.base_mva, voltage=vref,
                                 terminal_soc=terminal_soc, hull_variant=hull_variant))
    obj = emit_objective(objective, net, h, prices, network_block=nblk, ess_blocks=blocks)
    return nblk, blocks, obj


def build_problem(net, ess_model: EssModel | str | Sequence[EssModel | str],
                  network_kind: NetworkBlockKind | str = NetworkBlockKind.DC,
                  objective: str = "cost", prices: Sequence[float] | None = None, *,
                  terminal_soc: bool = False, hull_variant: str = "as_printed") -> CanonicalProblem:
    """Emit every block for ``net`` and assemble them (see :func:`emit_blocks`)."""
    nblk, blocks, obj = emit_blocks(net, ess_model, network_kind, objective, prices,
                                    terminal_soc=terminal_soc, hull_variant=hull_variant)
    return assemble(obj, nblk, blocks, options=dict(hull_variant=hull_variant,
                                                    terminal_soc=terminal_soc))
