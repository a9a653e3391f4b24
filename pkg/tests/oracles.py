"""Reference computations that share no code with the solvers under test."""
from __future__ import annotations

import itertools
import math

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from essopt.grid import Branch, Bus, EssDevice, Generator, Horizon, Network


def arbitrage_net(prices, dev: EssDevice, dt: float = 1.0, base_mva: float = 10.0) -> Network:
    """Two buses, a generator that can import or export freely, storage on the load bus."""
    T = len(prices)
    return Network(
        [Bus(1, 1.0, 1.0, "slack"), Bus(2)],
        [Branch(1, 2, 0.001, 0.01, 1000.0)],
        [Generator(1, -1000.0, 1000.0, -1000.0, 1000.0)],
        [dev],
        [[0.0] * T, [0.5] * T],
        [[0.0] * T, [0.1] * T],
        base_mva, Horizon(T, dt))


def grid_dp_profit(prices, dev: EssDevice, dt: float = 1.0, step: float = 0.01) -> float:
    """Best arbitrage profit of a lossless device by dynamic programming on an SOC grid.

    Stored energy moves in multiples of ``step * dt``; the device's powers and
    energies are assumed to lie on the grid (true for the generated corpus).
    """
    assert dev.eta_ch == 1.0 and dev.eta_disch == 1.0
    e_step = step * dt
    k_min = math.ceil(dev.e_min / e_step - 1e-9)
    k_max = math.floor(dev.e_max / e_step + 1e-9)
    k0 = round(dev.e_init / e_step)
    j_ch = math.floor(dev.p_ch_max / step + 1e-9)
    j_dis = math.floor(dev.p_disch_max / step + 1e-9)
    states = np.arange(k_min, k_max + 1)
    value = np.where(states == k0, 0.0, -np.inf)
    for price in prices:
        new = np.full(states.size, -np.inf)
        for j in range(-j_dis, j_ch + 1):
            # j > 0 charges: buy j*step MW for dt hours
            gain = -price * j * step * dt
            src = states - j
            ok = (src >= k_min) & (src <= k_max)
            cand = np.full(states.size, -np.inf)
            cand[ok] = value[src[ok] - k_min] + gain
            new = np.maximum(new, cand)
        value = new
    return float(value.max())


def brute_force_two_period(prices, dev: EssDevice, dt: float = 1.0, step: float = 0.01) -> float:
    """Exhaustive grid over charge in period 0 and discharge in period 1 with efficiencies."""
    best = 0.0
    for pc in np.arange(0.0, dev.p_ch_max + 1e-12, step):
        e1 = dev.e_init + dt * dev.eta_ch * pc
        if e1 > dev.e_max + 1e-12:
            continue
        for pd in np.arange(0.0, dev.p_disch_max + 1e-12, step):
            e2 = e1 - dt * pd / dev.eta_disch
            if e2 < dev.e_min - 1e-12:
                continue
            best = max(best, dt * (prices[1] * pd - prices[0] * pc))
    return best


def linprog_solve(p, fixings=None):
    """Solve an LP-class CanonicalProblem with HiGHS; ``None`` when infeasible."""
    assert not p.quad_rows and not p.cone_rows and not p.objective.quad
    names = list(p.variables)
    idx = {n: i for i, n in enumerate(names)}
    bounds = []
    for n in names:
        v = p.variables[n]
        lo, hi = v.lb, v.ub
        if fixings and n in fixings:
            lo = hi = float(fixings[n])
        bounds.append((None if lo == -np.inf else lo, None if hi == np.inf else hi))
    c = np.zeros(len(names))
    for n, coef in p.objective.linear.items():
        c[idx[n]] += coef
    eq_r, eq_c, eq_v, b_eq = [], [], [], []
    ub_r, ub_c, ub_v, b_ub = [], [], [], []
    for r in p.linear_rows:
        if r.sense == "==":
            i = len(b_eq)
            b_eq.append(r.rhs)
            for n, a in r.coeffs.items():
                eq_r.append(i); eq_c.append(idx[n]); eq_v.append(a)
        else:
            sgn = 1.0 if r.sense == "<=" else -1.0
            i = len(b_ub)
            b_ub.append(sgn * r.rhs)
            for n, a in r.coeffs.items():
                ub_r.append(i); ub_c.append(idx[n]); ub_v.append(sgn * a)
    n = len(names)
    A_eq = sp.csr_matrix((eq_v, (eq_r, eq_c)), shape=(len(b_eq), n)) if b_eq else None
    A_ub = sp.csr_matrix((ub_v, (ub_r, ub_c)), shape=(len(b_ub), n)) if b_ub else None
    res = linprog(c, A_ub=A_ub, b_ub=b_ub or None, A_eq=A_eq, b_eq=b_eq or None, bounds=bounds,
                  method="highs")
    if res.status == 2:
        return None
    assert res.status == 0, res.message
    return float(res.fun + p.objective.constant), dict(zip(names, res.x))


def mode_enumeration(p, device_fields) -> float:
    """Minimum over all 3^T charge/discharge/idle mode sequences of the per-mode LP."""
    a_ch, a_dis = device_fields["alpha_ch"], device_fields["alpha_disch"]
    best = math.inf
    for modes in itertools.product((0, 1, 2), repeat=len(a_ch)):
        fix = {}
        for t, m in enumerate(modes):
            fix[a_ch[t]] = 1.0 if m == 1 else 0.0
            fix[a_dis[t]] = 1.0 if m == 2 else 0.0
        out = linprog_solve(p, fix)
        if out is not None:
            best = min(best, out[0])
    return best


def distflow_two_bus(r: float, x: float, p_load: float, q_load: float, v0: float = 1.0):
    """Exact single-branch branch-flow solution by bisection on the squared current.

    Returns ``(P, Q, l, V1)`` in per-unit with ``P, Q`` the sending-end flows.
    """
    def resid(l):
        P, Q = p_load + r * l, q_load + x * l
        return l * v0 - (P * P + Q * Q)

    # resid is a concave parabola in l, negative at 0; the physical root is the
    # smaller one, left of the vertex
    lo = 0.0
    hi = (v0 - 2 * (r * p_load + x * q_load)) / (2 * (r * r + x * x))
    assert resid(hi) > 0, "no power-flow solution"
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if resid(mid) < 0:
            lo = mid
        else:
            hi = mid
    l = 0.5 * (lo + hi)
    P, Q = p_load + r * l, q_load + x * l
    V1 = v0 - 2 * (r * P + x * Q) + (r * r + x * x) * l
    return P, Q, l, V1


def random_cone_program(rng: np.random.Generator, n: int, p: int, l: int, q: list[int]):
    """Feasible, bounded cone program with a known optimal primal-dual pair.

    Builds strictly complementary ``s, z`` in the cone and sets ``b, h, c`` so
    that ``(x0, y0, z0, s0)`` satisfies the KKT conditions.
    """
    m = l + sum(q)
    A = sp.random(p, n, density=0.5, random_state=rng, data_rvs=rng.standard_normal).toarray()
    A[np.arange(p), rng.choice(n, p, replace=False)] += 3.0
    G = rng.standard_normal((m, n))
    x0 = rng.standard_normal(n)
    y0 = rng.standard_normal(p)
    s0, z0 = np.zeros(m), np.zeros(m)
    active = rng.random(l) < 0.5
    s0[:l] = np.where(active, 0.0, rng.random(l) + 0.1)
    z0[:l] = np.where(active, rng.random(l) + 0.1, 0.0)
    off = l
    for d in q:
        kind = rng.integers(3)
        u = rng.standard_normal(d - 1)
        u /= np.linalg.norm(u)
        if kind == 0:      # s interior, z = 0
            s0[off] = 2.0; s0[off + 1:off + d] = u
        elif kind == 1:    # z interior, s = 0
            z0[off] = 2.0; z0[off + 1:off + d] = u
        else:              # both on the boundary, opposite rays
            a, b = rng.random() + 0.5, rng.random() + 0.5
            s0[off] = a; s0[off + 1:off + d] = a * u
            z0[off] = b; z0[off + 1:off + d] = -b * u
        off += d
    b = A @ x0
    h = G @ x0 + s0
    c = -A.T @ y0 - G.T @ z0
    return c, A, b, G, h, float(c @ x0)
