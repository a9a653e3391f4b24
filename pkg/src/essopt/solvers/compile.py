"""Lowering a :class:`CanonicalProblem` to the conic standard form

    minimize    c'x
    subject to  A x = b
                G x + s = h,   s in K = R+^l x Q^{q_1} x ... x Q^{q_k}

Variables whose bounds coincide are substituted out, and single-variable
linear rows are turned into bounds until nothing changes (that is the whole
presolve). Convex quadratic rows and quadratic objective terms become
second-order cones through epigraph variables.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..blocks import Affine, ConeRow, LinearRow, QuadRow
from ..problem import CanonicalProblem

_INF = float("inf")


class Infeasible(Exception):
    """Raised by the presolve when bounds or rows are contradictory."""


@dataclass
class ConicProgram:
    c: np.ndarray
    A: sp.csc_matrix
    b: np.ndarray
    G: sp.csc_matrix
    h: np.ndarray
    l: int
    q: list[int]
    names: list[str] = field(default_factory=list)
    fixed: dict[str, float] = field(default_factory=dict)
    offset: float = 0.0
    n_aux: int = 0
    unused: dict[str, float] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def m(self) -> int:
        return self.h.size

    @property
    def degree(self) -> int:
        return self.l + len(self.q)

    def assignment(self, x: np.ndarray) -> dict[str, float]:
        vals = dict(self.fixed)
        vals.update(self.unused)
        for i, name in enumerate(self.names):
            vals[name] = float(x[i])
        return vals


def _tol(*vals) -> float:
    return 1e-9 * max([1.0, *(abs(v) for v in vals if math.isfinite(v))])


def _presolve(p: CanonicalProblem, relax_binaries: bool):
    lb = {n: v.lb for n, v in p.variables.items()}
    ub = {n: v.ub for n, v in p.variables.items()}
    if not relax_binaries and p.binary_vars:
        raise ValueError("continuous solve called on a problem with binaries")
    fixed: dict[str, float] = {}
    for n in p.variables:
        if lb[n] > ub[n] + _tol(lb[n], ub[n]):
            raise Infeasible(f"bounds of {n} cross: [{lb[n]}, {ub[n]}]")
        if lb[n] >= ub[n]:
            fixed[n] = ub[n]

    rows = list(p.linear_rows)
    live = [True] * len(rows)
    changed = True
    while changed:
        changed = False
        for i, r in enumerate(rows):
            if not live[i]:
                continue
            free = {v: c for v, c in r.coeffs.items() if v not in fixed and c != 0.0}
            const = sum(c * fixed[v] for v, c in r.coeffs.items() if v in fixed)
            rhs = r.rhs - const
            if not free:
                if _sense_violation(0.0, r.sense, rhs) > _tol(rhs, const):
                    raise Infeasible(f"row {r.tag} violated after substitution by {rhs}")
                live[i] = False
                changed = True
                continue
            if len(free) != 1:
                continue
            (v, a), = free.items()
            val = rhs / a
            lo, hi = lb[v], ub[v]
            if r.sense == "==":
                lo = hi = val
            elif (r.sense == "<=") == (a > 0):
                hi = min(hi, val)
            else:
                lo = max(lo, val)
            if lo > hi + _tol(lo, hi):
                raise Infeasible(f"row {r.tag} pushes {v} outside [{lb[v]}, {ub[v]}]")
            if r.sense == "==":
                if not lb[v] - _tol(val) <= val <= ub[v] + _tol(val):
                    raise Infeasible(f"row {r.tag} fixes {v}={val} outside its bounds")
                val = min(max(val, lb[v]), ub[v])
                lb[v] = ub[v] = val
                fixed[v] = val
            else:
                lb[v], ub[v] = lo, hi
                if lo >= hi:
                    fixed[v] = hi
                    lb[v] = ub[v] = hi
            live[i] = False
            changed = True
    return lb, ub, fixed, [r for r, keep in zip(rows, live) if keep]


def _sense_violation(value, sense, rhs):
    if sense == "==":
        return abs(value - rhs)
    if sense == "<=":
        return max(0.0, value - rhs)
    return max(0.0, rhs - value)


class _Builder:
    def __init__(self, index: dict[str, int], fixed: dict[str, float]):
        self.index = index
        self.fixed = fixed
        self.n = len(index)
        self.eq: list[tuple[dict[int, float], float]] = []
        self.lin: list[tuple[dict[int, float], float]] = []
        self.cones: list[list[tuple[dict[int, float], float]]] = []

    def affine(self, coeffs, const=0.0) -> tuple[dict[int, float], float]:
        out: dict[int, float] = {}
        for v, c in coeffs.items():
            if c == 0.0:
                continue
            if v in self.fixed:
                const += c * self.fixed[v]
            else:
                j = self.index[v]
                out[j] = out.get(j, 0.0) + c
        return out, const

    def new_var(self) -> int:
        self.n += 1
        return self.n - 1

    # s_i = h_i - G_i x; a row of G is stored as (coeffs of G_i, h_i)
    def add_le(self, coeffs: dict[int, float], rhs: float):
        self.lin.append((coeffs, rhs))

    def add_soc(self, parts: list[tuple[dict[int, float], float]]):
        # parts are affine expressions e_k = const + a'x that must satisfy ||e_1..|| <= e_0
        self.cones.append([({j: -a for j, a in coeffs.items()}, const) for coeffs, const in parts])

    def add_rsoc(self, u, w, rest):
        def comb(e1, e2, s):
            d = dict(e1[0])
            for j, a in e2[0].items():
                d[j] = d.get(j, 0.0) + s * a
            return d, e1[1] + s * e2[1]
        parts = [comb(u, w, 1.0), comb(u, w, -1.0)]
        parts += [({j: 2 * a for j, a in e[0].items()}, 2 * e[1]) for e in rest]
        self.add_soc(parts)


def _psd_factor(Q: np.ndarray, what: str) -> np.ndarray:
    w, V = np.linalg.eigh(Q)
    scale = max(1.0, float(np.max(np.abs(w)))) if w.size else 1.0
    if w.size and w.min() < -1e-10 * scale:
        raise ValueError(f"{what} is not convex (eigenvalue {w.min():.3g})")
    keep = w > 1e-14 * scale
    return (np.sqrt(w[keep])[:, None] * V[:, keep].T)


def _quad_parts(b: _Builder, quad, fixed):
    """Split quadratic terms into a PSD matrix over free vars, a linear part and a constant."""
    lin: dict[str, float] = {}
    const = 0.0
    entries: dict[tuple[int, int], float] = {}
    for u, v, c in quad:
        fu, fv = u in fixed, v in fixed
        if fu and fv:
            const += c * fixed[u] * fixed[v]
        elif fu:
            lin[v] = lin.get(v, 0.0) + c * fixed[u]
        elif fv:
            lin[u] = lin.get(u, 0.0) + c * fixed[v]
        else:
            i, j = b.index[u], b.index[v]
            key = (min(i, j), max(i, j))
            entries[key] = entries.get(key, 0.0) + c
    return entries, lin, const


def _components(entries: dict[tuple[int, int], float]) -> list[list[int]]:
    parent: dict[int, int] = {}

    def find(a):
        parent.setdefault(a, a)
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for (i, j), c in entries.items():
        if c == 0.0:
            continue
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
    groups: dict[int, list[int]] = {}
    for a in sorted(parent):
        groups.setdefault(find(a), []).append(a)
    return list(groups.values())


def _sym_matrix(idx: list[int], entries) -> np.ndarray:
    pos = {j: k for k, j in enumerate(idx)}
    Q = np.zeros((len(idx), len(idx)))
    for (i, j), c in entries.items():
        if i in pos and j in pos:
            if i == j:
                Q[pos[i], pos[i]] += c
            else:
                Q[pos[i], pos[j]] += c / 2
                Q[pos[j], pos[i]] += c / 2
    return Q


def compile_problem(p: CanonicalProblem, relax_binaries: bool = False,
                    extra_linear: dict[str, float] | None = None) -> ConicProgram:
    """Lower ``p``; raises :class:`Infeasible` when the presolve proves infeasibility.

    ``extra_linear`` adds objective terms (natural units) without copying ``p``.
    """
    if p.nonconvex_rows:
        raise ValueError("problem has nonconvex rows; use the hull solver")
    lb, ub, fixed, rows = _presolve(p, relax_binaries)

    used: set[str] = set()
    for r in rows:
        used.update(r.coeffs)
    for r in (*p.quad_rows, *p.cone_rows):
        used.update(r.variables())
    obj_lin = dict(p.objective.linear)
    for v, c in (extra_linear or {}).items():
        obj_lin[v] = obj_lin.get(v, 0.0) + c
    for v, c in obj_lin.items():
        if c != 0.0:
            used.add(v)
    for u, v in p.objective.quad:
        used.update((u, v))
    for n in p.variables:
        if math.isfinite(lb[n]) or math.isfinite(ub[n]):
            used.add(n)

    names = [n for n in p.variables if n not in fixed and n in used]
    unused = {n: 0.0 for n in p.variables if n not in fixed and n not in used}
    index = {n: i for i, n in enumerate(names)}
    b = _Builder(index, fixed)

    for r in rows:
        coeffs, const = b.affine(r.coeffs)
        rhs = r.rhs - const
        if r.sense == "==":
            b.eq.append((coeffs, rhs))
        elif r.sense == "<=":
            b.add_le(coeffs, rhs)
        else:
            b.add_le({j: -a for j, a in coeffs.items()}, -rhs)

    for n in names:
        j = index[n]
        if math.isfinite(ub[n]):
            b.add_le({j: 1.0}, ub[n])
        if math.isfinite(lb[n]):
            b.add_le({j: -1.0}, -lb[n])

    for r in p.quad_rows:
        _lower_quad_row(b, r, fixed)

    for r in p.cone_rows:
        args = [b.affine(a.terms, a.const) for a in r.args]
        if all(not coeffs for coeffs, _ in args):
            x0 = {}
            if ConeRow(r.kind, tuple(Affine({}, c) for _, c in args), r.tag).violation(x0) > _tol(
                    *(c for _, c in args)):
                raise Infeasible(f"cone row {r.tag} violated by fixed values")
            continue
        if r.kind == "soc":
            b.add_soc(args)
        else:
            b.add_rsoc(args[0], args[1], args[2:])

    c_vec: dict[int, float] = {}
    offset = p.objective.constant
    for v, c in obj_lin.items():
        if v in fixed:
            offset += c * fixed[v]
        elif v in index:
            c_vec[index[v]] = c_vec.get(index[v], 0.0) + c
    entries, qlin, qconst = _quad_parts(b, tuple((u, v, c) for (u, v), c in p.objective.quad.items()), fixed)
    offset += qconst
    for v, c in qlin.items():
        c_vec[index[v]] = c_vec.get(index[v], 0.0) + c
    n_aux = 0
    for comp in _components(entries):
        F = _psd_factor(_sym_matrix(comp, entries), "objective")
        if F.shape[0] == 0:
            continue
        t = b.new_var()
        n_aux += 1
        c_vec[t] = 1.0
        rest = [({comp[k]: F[r_, k] for k in range(len(comp)) if F[r_, k] != 0.0}, 0.0)
                for r_ in range(F.shape[0])]
        b.add_rsoc(({t: 1.0}, 0.0), ({}, 1.0), rest)

    n = b.n
    c = np.zeros(n)
    for j, v in c_vec.items():
        c[j] = v
    A, bvec = _stack(b.eq, n)
    lin_rows = b.lin
    cone_rows = [row for cone in b.cones for row in cone]
    G, hvec = _stack(lin_rows + cone_rows, n)
    return ConicProgram(c, A, bvec, G, hvec, len(lin_rows), [len(cone) for cone in b.cones],
                        names, fixed, offset, n_aux, unused)


def _lower_quad_row(b: _Builder, r: QuadRow, fixed):
    entries, qlin, qconst = _quad_parts(b, r.quad, fixed)
    lin = dict(r.lin)
    for v, c in qlin.items():
        lin[v] = lin.get(v, 0.0) + c
    coeffs, const = b.affine(lin, qconst)
    sense = r.sense
    if sense == ">=":
        entries = {k: -c for k, c in entries.items()}
        coeffs = {j: -a for j, a in coeffs.items()}
        const, rhs = -const, -r.rhs
    elif sense == "<=":
        rhs = r.rhs
    else:
        raise ValueError(f"quadratic equality row {r.tag} is not convex")
    rhs -= const
    idx = sorted({i for key in entries for i in key})
    if not idx:
        b.add_le(coeffs, rhs)
        return
    F = _psd_factor(_sym_matrix(idx, entries), f"row {r.tag}")
    # tau = rhs - a'x >= ||F x||^2  as the rotated cone (tau, 1; F x)
    tau = ({j: -a for j, a in coeffs.items()}, rhs)
    rest = [({idx[k]: F[i, k] for k in range(len(idx)) if F[i, k] != 0.0}, 0.0) for i in range(F.shape[0])]
    b.add_rsoc(tau, ({}, 1.0), rest)


def _stack(rows, n):
    data, ri, ci = [], [], []
    rhs = np.zeros(len(rows))
    for i, (coeffs, h) in enumerate(rows):
        rhs[i] = h
        for j, a in coeffs.items():
            if a != 0.0:
                ri.append(i)
                ci.append(j)
                data.append(a)
    M = sp.csc_matrix((data, (ri, ci)), shape=(len(rows), n))
    M.sum_duplicates()
    return M, rhs
