"""Network constraint blocks and objectives.

Three standard convex network models are provided: DC power flow, a
decoupled linearized AC model (flat-start Q-V sensitivity) and the
second-order-cone branch-flow relaxation for radial feeders. Nodal balance
rows carry a ``key`` so the assembler can wire storage injections into them.
Everything inside a block is per-unit on ``net.base_mva``.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

from .blocks import Affine, ConstraintBlock
from .ess import VoltageRef
from .grid import Horizon, Network, is_radial


class NetworkBlockKind(str, Enum):
    DC = "dc"
    LINEARIZED_AC = "linac"
    BRANCH_FLOW_SOCP = "distflow"


class ObjectiveKind(str, Enum):
    GENERATION_COST = "cost"
    LOSS_MIN = "loss"
    ARBITRAGE_PROFIT = "arbitrage"


class TopologyError(ValueError):
    pass


def pbal_key(bus: int, t: int) -> str:
    return f"pbal[{bus}][{t}]"


def qbal_key(bus: int, t: int) -> str:
    return f"qbal[{bus}][{t}]"


def _gen_vars(blk: ConstraintBlock, net: Network, t: int, reactive: bool):
    base = net.base_mva
    pg, qg = {}, {}
    for g, gen in enumerate(net.generators):
        pg[g] = blk.var(f"net.pg[{g}][{t}]", gen.p_min / base, gen.p_max / base)
        if reactive:
            qg[g] = blk.var(f"net.qg[{g}][{t}]", gen.q_min / base, gen.q_max / base)
    return pg, qg


def _check_reactance(net: Network):
    for k, br in enumerate(net.branches):
        if br.reactance == 0:
            raise ValueError(f"branch {k} ({br.from_bus}-{br.to_bus}) has zero reactance")


def _dc_rows(blk: ConstraintBlock, net: Network, h: Horizon, reactive: bool):
    base = net.base_mva
    load = net.loads_p()
    slack = net.slack.id
    for t in h.periods:
        theta = {b.id: blk.var(f"net.theta[{b.id}][{t}]", *((0.0, 0.0) if b.id == slack else ()))
                 for b in net.buses}
        pg, _ = _gen_vars(blk, net, t, reactive)
        flows = {}
        for k, br in enumerate(net.branches):
            lim = br.flow_limit / base
            flows[k] = f = blk.var(f"net.f[{k}][{t}]", -lim, lim)
            b_k = 1.0 / br.reactance
            blk.linear({f: 1.0, theta[br.from_bus]: -b_k, theta[br.to_bus]: b_k}, "==", 0.0, "dc-flow")
        for i, bus in enumerate(net.buses):
            coeffs: dict[str, float] = {}
            for g, gen in enumerate(net.generators):
                if gen.bus == bus.id:
                    coeffs[pg[g]] = 1.0
            for k, br in enumerate(net.branches):
                if br.from_bus == bus.id:
                    coeffs[flows[k]] = coeffs.get(flows[k], 0.0) - 1.0
                elif br.to_bus == bus.id:
                    coeffs[flows[k]] = coeffs.get(flows[k], 0.0) + 1.0
            blk.linear(coeffs, "==", load[i, t] / base, "p-balance", key=pbal_key(bus.id, t))


def emit_dc_network(net: Network, h: Horizon | None = None) -> ConstraintBlock:
    """Lossless DC power flow with angle variables and flow limits."""
    h = h or net.horizon
    _check_reactance(net)
    blk = ConstraintBlock("net")
    blk.meta.update(kind=NetworkBlockKind.DC, network=net, horizon=h)
    _dc_rows(blk, net, h, reactive=False)
    return blk


def emit_linearized_ac_network(net: Network, h: Horizon | None = None) -> ConstraintBlock:
    """DC block plus reactive balance and voltage magnitudes.

    Reactive branch flow is ``(v_from - v_to) / x``, the flat-start sensitivity,
    so a branch carrying Q drops voltage by ``x * Q``. The slack bus is held at
    1.0 per-unit.
    """
    h = h or net.horizon
    _check_reactance(net)
    base = net.base_mva
    blk = ConstraintBlock("net")
    blk.meta.update(kind=NetworkBlockKind.LINEARIZED_AC, network=net, horizon=h)
    _dc_rows(blk, net, h, reactive=True)
    loadq = net.loads_q()
    slack = net.slack.id
    for t in h.periods:
        v = {}
        for b in net.buses:
            lo, hi = math.sqrt(b.v_sq_min), math.sqrt(b.v_sq_max)
            if b.id == slack:
                lo = hi = min(max(1.0, lo), hi)
            v[b.id] = blk.var(f"net.vm[{b.id}][{t}]", lo, hi)
        fq = {}
        for k, br in enumerate(net.branches):
            lim = br.flow_limit / base
            fq[k] = blk.var(f"net.fq[{k}][{t}]", -lim, lim)
            b_k = 1.0 / br.reactance
            blk.linear({fq[k]: 1.0, v[br.from_bus]: -b_k, v[br.to_bus]: b_k}, "==", 0.0, "q-v-drop")
        for i, bus in enumerate(net.buses):
            coeffs: dict[str, float] = {}
            for g, gen in enumerate(net.generators):
                if gen.bus == bus.id:
                    coeffs[f"net.qg[{g}][{t}]"] = 1.0
            for k, br in enumerate(net.branches):
                if br.from_bus == bus.id:
                    coeffs[fq[k]] = coeffs.get(fq[k], 0.0) - 1.0
                elif br.to_bus == bus.id:
                    coeffs[fq[k]] = coeffs.get(fq[k], 0.0) + 1.0
            blk.linear(coeffs, "==", loadq[i, t] / base, "q-balance", key=qbal_key(bus.id, t))
    return blk


def orient_tree(net: Network) -> list[tuple[int, int, int]]:
    """Branches as ``(k, parent, child)`` in breadth-first order from the slack bus."""
    if not is_radial(net.bus_ids, net.branches):
        raise TopologyError("branch-flow model requires a radial network (a tree over all buses)")
    adj: dict[int, list[tuple[int, int]]] = {b: [] for b in net.bus_ids}
    for k, br in enumerate(net.branches):
        adj[br.from_bus].append((k, br.to_bus))
        adj[br.to_bus].append((k, br.from_bus))
    root = net.slack.id
    seen = {root}
    order = []
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for k, w in sorted(adj[u]):
            if w not in seen:
                seen.add(w)
                order.append((k, u, w))
                queue.append(w)
    return order


def emit_branch_flow_socp(net: Network, h: Horizon | None = None) -> ConstraintBlock:
    """Second-order-cone relaxation of the branch-flow equations on a tree.

    Per period: squared voltages ``V``, squared currents ``l`` and sending-end
    flows ``P, Q`` for every branch oriented away from the slack bus. Branch
    thermal limits become ``l <= flow_limit**2`` (per-unit, at 1.0 p.u. voltage).
    """
    h = h or net.horizon
    tree = orient_tree(net)
    base = net.base_mva
    blk = ConstraintBlock("net")
    blk.meta.update(kind=NetworkBlockKind.BRANCH_FLOW_SOCP, network=net, horizon=h, tree=tree)
    loadp, loadq = net.loads_p(), net.loads_q()
    slack = net.slack.id
    for b in net.buses:
        blk.voltage[b.id] = [f"net.V[{b.id}][{t}]" for t in h.periods]
    for t in h.periods:
        V = {}
        for b in net.buses:
            lo, hi = b.v_sq_min, b.v_sq_max
            if b.id == slack:
                lo = hi = min(max(1.0, lo), hi)
            V[b.id] = blk.var(f"net.V[{b.id}][{t}]", lo, hi)
        pg, qg = _gen_vars(blk, net, t, reactive=True)
        P, Q, L = {}, {}, {}
        for k, i, j in tree:
            br = net.branches[k]
            r, x = br.resistance, br.reactance
            P[k] = blk.var(f"net.P[{k}][{t}]")
            Q[k] = blk.var(f"net.Q[{k}][{t}]")
            L[k] = blk.var(f"net.l[{k}][{t}]", 0.0, (br.flow_limit / base) ** 2)
            blk.linear({V[j]: 1.0, V[i]: -1.0, P[k]: 2 * r, Q[k]: 2 * x, L[k]: -(r * r + x * x)},
                       "==", 0.0, "voltage-drop")
            blk.cone("rsoc", (Affine({L[k]: 1.0}), Affine({V[i]: 1.0}),
                              Affine({P[k]: 1.0}), Affine({Q[k]: 1.0})), "branch-cone")
        for idx, bus in enumerate(net.buses):
            cp: dict[str, float] = {}
            cq: dict[str, float] = {}
            for g, gen in enumerate(net.generators):
                if gen.bus == bus.id:
                    cp[pg[g]] = 1.0
                    cq[qg[g]] = 1.0
            for k, i, j in tree:
                br = net.branches[k]
                if i == bus.id:
                    cp[P[k]] = -1.0
                    cq[Q[k]] = -1.0
                elif j == bus.id:
                    cp[P[k]] = 1.0
                    cp[L[k]] = -br.resistance
                    cq[Q[k]] = 1.0
                    cq[L[k]] = -br.reactance
            blk.linear(cp, "==", loadp[idx, t] / base, "p-balance", key=pbal_key(bus.id, t))
            blk.linear(cq, "==", loadq[idx, t] / base, "q-balance", key=qbal_key(bus.id, t))
    return blk


def emit_network(kind: NetworkBlockKind | str, net: Network, h: Horizon | None = None) -> ConstraintBlock:
    kind = NetworkBlockKind(kind)
    if kind is NetworkBlockKind.DC:
        return emit_dc_network(net, h)
    if kind is NetworkBlockKind.LINEARIZED_AC:
        return emit_linearized_ac_network(net, h)
    return emit_branch_flow_socp(net, h)


def voltage_ref(network_block: ConstraintBlock, bus: int) -> VoltageRef | None:
    """Squared-voltage handle for storage models; ``None`` if the block has none."""
    names = network_block.voltage.get(bus)
    if not names:
        return None
    b = network_block.meta["network"].bus(bus)
    return VoltageRef(bus, tuple(names), b.v_sq_min, b.v_sq_max)


# --------------------------------------------------------------------------
# objectives
# --------------------------------------------------------------------------

@dataclass
class Objective:
    """``constant + sum(linear[v] * v) + sum(quad[(u, v)] * u * v)`` in natural units."""

    kind: ObjectiveKind | None = None
    linear: dict[str, float] = field(default_factory=dict)
    quad: dict[tuple[str, str], float] = field(default_factory=dict)
    constant: float = 0.0

    def add_linear(self, v: str, c: float):
        self.linear[v] = self.linear.get(v, 0.0) + c

    def add_quad(self, u: str, v: str, c: float):
        key = (u, v) if u <= v else (v, u)
        self.quad[key] = self.quad.get(key, 0.0) + c

    def value(self, x: Mapping[str, float]) -> float:
        return (self.constant + sum(c * x[v] for v, c in self.linear.items())
                + sum(c * x[u] * x[v] for (u, v), c in self.quad.items()))

    def variables(self) -> set[str]:
        names = set(self.linear)
        for u, v in self.quad:
            names.update((u, v))
        return names

    def scaled(self, k: float) -> "Objective":
        return Objective(self.kind, {v: k * c for v, c in self.linear.items()},
                         {uv: k * c for uv, c in self.quad.items()}, k * self.constant)


def emit_objective(kind: ObjectiveKind | str, net: Network, h: Horizon | None = None,
                   prices: Sequence[float] | None = None, *,
                   network_block: ConstraintBlock | None = None,
                   ess_blocks: Sequence[ConstraintBlock] = ()) -> Objective:
    """Build a convex objective in natural units ($ or MWh) over per-unit variables.

    ``cost``       sum_t sum_g dt * (c2 * P^2 + c1 * P + c0), P in MW
    ``loss``       sum_t dt * (branch losses + converter losses), MWh
    ``arbitrage``  sum_t dt * price[t] * (power drawn by storage from the grid), $;
                   the profit is the negative of this value
    """
    kind = ObjectiveKind(kind)
    h = h or net.horizon
    base, dt = net.base_mva, h.dt_hours
    obj = Objective(kind)
    if kind is ObjectiveKind.ARBITRAGE_PROFIT and prices is None:
        raise ValueError("arbitrage objective needs a per-period price vector")
    if kind is not ObjectiveKind.ARBITRAGE_PROFIT and prices is not None:
        raise ValueError(f"prices only apply to the arbitrage objective, not {kind.value}")
    if kind is ObjectiveKind.GENERATION_COST:
        for t in h.periods:
            for g, gen in enumerate(net.generators):
                v = f"net.pg[{g}][{t}]"
                if gen.cost_quadratic:
                    obj.add_quad(v, v, dt * gen.cost_quadratic * base * base)
                if gen.cost_linear:
                    obj.add_linear(v, dt * gen.cost_linear * base)
                obj.constant += dt * gen.cost_constant
    elif kind is ObjectiveKind.LOSS_MIN:
        if network_block is None:
            raise ValueError("loss objective needs the network block")
        nkind = network_block.meta["kind"]
        for t in h.periods:
            for k, br in enumerate(net.branches):
                if br.resistance == 0:
                    continue
                if nkind is NetworkBlockKind.BRANCH_FLOW_SOCP:
                    obj.add_linear(f"net.l[{k}][{t}]", dt * br.resistance * base)
                else:
                    f = f"net.f[{k}][{t}]"
                    obj.add_quad(f, f, dt * br.resistance * base)
        for blk in ess_blocks:
            for v in blk.meta.get("fields", {}).get("p_loss", []):
                obj.add_linear(v, dt * base)
    else:
        prices = list(prices)
        if len(prices) != h.num_periods:
            raise ValueError(f"got {len(prices)} prices for {h.num_periods} periods")
        for blk in ess_blocks:
            for (bus, t), inj in sorted(blk.injections.items(), key=lambda kv: kv[0][1]):
                for v, c in inj["p"].items():
                    obj.add_linear(v, -dt * prices[t] * base * c)
    return obj
