"""Primal-dual interior-point method for linear cone programs.

Solves

    minimize c'x  s.t.  A x = b,  G x + s = h,  s in K

through the homogeneous self-dual embedding, with Nesterov-Todd scaling and
Mehrotra predictor-corrector steps. Returns an optimal pair or a certificate
of primal or dual infeasibility. The KKT system is factored sparsely with a
small static regularization that iterative refinement removes.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cones import ConeSet

log = logging.getLogger(__name__)


@dataclass
class IpmResult:
    status: str
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    s: np.ndarray
    iterations: int
    pres: float = np.nan
    dres: float = np.nan
    gap: float = np.nan
    pcost: float = np.nan
    dcost: float = np.nan
    history: list = field(default_factory=list)


def _inf(v: np.ndarray) -> float:
    return float(np.max(np.abs(v))) if v.size else 0.0


def _equilibrate(A, G, cones: ConeSet, iters: int = 12):
    """Ruiz scaling: column factors ``D``, row factors ``E_A``, ``E_G`` (uniform per cone)."""
    n = A.shape[1]
    D = np.ones(n)
    EA = np.ones(A.shape[0])
    EG = np.ones(G.shape[0])
    As, Gs = A.tocsc(copy=True), G.tocsc(copy=True)
    for _ in range(iters):
        M = sp.vstack([As, Gs]).tocsc()
        if M.nnz == 0:
            break
        colmax = abs(M).max(axis=0).toarray().ravel()
        dc = 1.0 / np.sqrt(np.where(colmax > 0, colmax, 1.0))
        ra = abs(As).max(axis=1).toarray().ravel() if As.shape[0] else np.zeros(0)
        rg = abs(Gs).max(axis=1).toarray().ravel() if Gs.shape[0] else np.zeros(0)
        for idx in cones.groups.values():
            rg[idx] = rg[idx].max(axis=1, keepdims=True)
        ea = 1.0 / np.sqrt(np.where(ra > 0, ra, 1.0))
        eg = 1.0 / np.sqrt(np.where(rg > 0, rg, 1.0))
        D = np.clip(D * dc, 1e-4, 1e4)
        EA = np.clip(EA * ea, 1e-4, 1e4)
        EG = np.clip(EG * eg, 1e-4, 1e4)
        As = sp.diags(EA) @ A @ sp.diags(D)
        Gs = sp.diags(EG) @ G @ sp.diags(D)
        if (np.all(np.abs(dc - 1) < 0.05) and np.all(np.abs(ea - 1) < 0.05)
                and np.all(np.abs(eg - 1) < 0.05)):
            break
    return D, EA, EG, As.tocsc(), Gs.tocsc()


class _KKT:
    """Factor and solve [[0, A', G'], [A, 0, 0], [G, 0, -W'W]] with refinement."""

    def __init__(self, A, G, reg: float, refine: int):
        n, p, m = A.shape[1], A.shape[0], G.shape[0]
        self.n, self.p, self.m = n, p, m
        self.static = sp.bmat([[sp.csc_matrix((n, n)), A.T, G.T],
                               [A, sp.csc_matrix((p, p)), None],
                               [G, None, sp.csc_matrix((m, m))]], format="csc")
        self.reg = sp.diags(np.concatenate([np.full(n, reg), np.full(p, -reg), np.full(m, -reg)]))
        self.refine = refine

    def factor(self, WtW):
        n, p, m = self.n, self.p, self.m
        block = sp.block_diag((sp.csc_matrix((n + p, n + p)), -WtW), format="csc")
        self.K = (self.static + block).tocsc()
        self.lu = spla.splu((self.K + self.reg).tocsc(), permc_spec="COLAMD",
                            options=dict(SymmetricMode=False))

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        u = self.lu.solve(rhs)
        scale = max(1.0, _inf(rhs))
        for _ in range(self.refine):
            r = rhs - self.K @ u
            if _inf(r) <= 1e-14 * scale:
                break
            u = u + self.lu.solve(r)
        return u


def solve_cone_program(c, A, b, G, h, l: int, q: list[int], *, feastol: float = 1e-8,
                       reltol: float = 1e-8, abstol: float = 1e-9, max_iter: int = 200,
                       step: float = 0.99, reg: float = 1e-11, refine: int = 4,
                       equilibrate: bool = True) -> IpmResult:
    c = np.asarray(c, float)
    b = np.asarray(b, float)
    h = np.asarray(h, float)
    A = sp.csc_matrix(A, shape=(b.size, c.size))
    G = sp.csc_matrix(G, shape=(h.size, c.size))
    cones = ConeSet(l, q)
    n, p, m = c.size, b.size, h.size
    if m != cones.m:
        raise ValueError(f"G has {m} rows, cone dimensions sum to {cones.m}")

    # -- scaled data ------------------------------------------------------
    if equilibrate and n:
        D, EA, EG, As, Gs = _equilibrate(A, G, cones)
    else:
        D, EA, EG, As, Gs = np.ones(n), np.ones(p), np.ones(m), A, G
    cs = D * c
    cscale = max(1.0, _inf(cs))
    cs = cs / cscale
    bs, hs = EA * b, EG * h

    nb, nh, nc = max(1.0, _inf(b)), max(1.0, _inf(h)), max(1.0, _inf(c))

    def unscale(x, y, z, s, tau):
        return (D * x / tau, EA * y * cscale / tau, EG * z * cscale / tau, s / EG / tau)

    def quality(xo, yo, zo, so):
        pres = max(_inf(A @ xo - b) / nb if p else 0.0, _inf(G @ xo + so - h) / nh if m else 0.0)
        dres = _inf(c + A.T @ yo + G.T @ zo) / nc
        pcost = float(c @ xo)
        dcost = float(-b @ yo - h @ zo)
        gap = float(so @ zo)
        return pres, dres, gap, pcost, dcost

    if m == 0 and p == 0:
        if np.any(c != 0):
            return IpmResult("unbounded", -c, np.zeros(0), np.zeros(0), np.zeros(0), 0)
        return IpmResult("optimal", np.zeros(n), np.zeros(0), np.zeros(0), np.zeros(0), 0, 0, 0, 0, 0, 0)

    kkt = _KKT(As, Gs, reg, refine)
    e = cones.identity()

    # -- initial point ------------------------------------------------------
    kkt.factor(sp.identity(m, format="csc"))
    u = kkt.solve(np.concatenate([np.zeros(n), bs, hs]))
    x, s = u[:n], -u[n + p:]
    u = kkt.solve(np.concatenate([-cs, np.zeros(p), np.zeros(m)]))
    y, z = u[n:n + p], u[n + p:]
    for vec in (s, z):
        t = -cones.min_eig(vec)
        if t >= -1e-8 * max(1.0, np.linalg.norm(vec)):
            vec += (1.0 + t) * e
    tau, kappa = 1.0, 1.0

    history = []
    best = None
    status = "iteration_limit"
    it = 0
    for it in range(max_iter + 1):
        # -- residuals of the embedding -------------------------------------
        rx = As.T @ y + Gs.T @ z + cs * tau
        ry = -(As @ x) + bs * tau
        rz = -(Gs @ x) + hs * tau - s
        rt = -cs @ x - bs @ y - hs @ z - kappa
        mu = (s @ z + tau * kappa) / (cones.degree + 1)

        xo, yo, zo, so = unscale(x, y, z, s, tau)
        pres, dres, gap, pcost, dcost = quality(xo, yo, zo, so)
        denom = max(1.0, min(abs(pcost), abs(dcost)))
        history.append((it, pres, dres, gap, pcost, tau, kappa))
        log.debug("it %d pres %.2e dres %.2e gap %.2e pcost %.6e tau %.2e kappa %.2e",
                  it, pres, dres, gap, pcost, tau, kappa)
        merit = max(pres, dres, gap / denom)
        if best is None or merit < best[0]:
            best = (merit, xo, yo, zo, so, pres, dres, gap, pcost, dcost)

        if pres <= feastol and dres <= feastol and (gap <= abstol or gap / denom <= reltol):
            return IpmResult("optimal", xo, yo, zo, so, it, pres, dres, gap, pcost, dcost, history)

        # infeasibility certificates on the unnormalized iterate
        hz = float(bs @ y + hs @ z)
        if hz < 0:
            yc, zc = EA * y, EG * z
            pinf = _inf(A.T @ yc + G.T @ zc) / nc / (-(b @ yc + h @ zc))
            if pinf <= feastol:
                sc = -(b @ yc + h @ zc)
                return IpmResult("infeasible", np.full(n, np.nan), yc / sc, zc / sc, np.full(m, np.nan),
                                 it, pres, dres, gap, np.inf, np.inf, history)
        cx = float(cs @ x)
        if cx < 0:
            xc, sc_ = D * x, s / EG
            dinf = max(_inf(A @ xc) / nb if p else 0.0, _inf(G @ xc + sc_) / nh if m else 0.0) / (-(c @ xc))
            if dinf <= feastol:
                k = -(c @ xc)
                return IpmResult("unbounded", xc / k, np.full(p, np.nan), np.full(m, np.nan), sc_ / k,
                                 it, pres, dres, gap, -np.inf, -np.inf, history)
        if it == max_iter:
            break

        # -- Newton directions ---------------------------------------------
        if cones.min_eig(s) <= 0 or cones.min_eig(z) <= 0:
            log.debug("iterate reached the cone boundary at iteration %d", it)
            break
        W = cones.nt_scaling(s, z)
        lam = W.W(z)
        try:
            kkt.factor(W.WtW())
        except RuntimeError:
            log.debug("KKT factorization failed at iteration %d", it)
            break
        u2 = kkt.solve(np.concatenate([-cs, bs, hs]))
        x2, y2, z2 = u2[:n], u2[n:n + p], u2[n + p:]
        denom2 = kappa / tau - (cs @ x2 + bs @ y2 + hs @ z2)

        def direction(eta, rc, rk):
            dsl = cones.jdiv(lam, rc)
            rhs = np.concatenate([-(1 - eta) * rx, (1 - eta) * ry, -W.W(dsl) + (1 - eta) * rz])
            u1 = kkt.solve(rhs)
            x1, y1, z1 = u1[:n], u1[n:n + p], u1[n + p:]
            dtau = (-(1 - eta) * rt + (cs @ x1 + bs @ y1 + hs @ z1) + rk / tau) / denom2
            dx, dy, dz = x1 + dtau * x2, y1 + dtau * y2, z1 + dtau * z2
            ds = W.W(dsl - W.W(dz))
            dkappa = (rk - kappa * dtau) / tau
            return dx, dy, dz, ds, dtau, dkappa

        def max_alpha(dz, ds, dtau, dkappa):
            a = min(cones.max_step(lam, W.W(dz)), cones.max_step(lam, W.Winv(ds)))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkappa < 0:
                a = min(a, -kappa / dkappa)
            return a

        lam2 = cones.jprod(lam, lam)
        dxa, dya, dza, dsa, dta, dka = direction(0.0, -lam2, -tau * kappa)
        aa = min(1.0, max_alpha(dza, dsa, dta, dka))
        sigma = (1.0 - aa) ** 3
        corr = cones.jprod(W.Winv(dsa), W.W(dza))
        rc = -lam2 + sigma * mu * e - corr
        rk = -tau * kappa + sigma * mu - dta * dka
        dx, dy, dz, ds, dt, dk = direction(sigma, rc, rk)
        alpha = min(1.0, step * max_alpha(dz, ds, dt, dk))
        if not np.isfinite(alpha) or alpha < 1e-12:
            log.debug("step length collapsed at iteration %d", it)
            break

        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        s = s + alpha * ds
        tau += alpha * dt
        kappa += alpha * dk

    _, xo, yo, zo, so, pres, dres, gap, pcost, dcost = best
    return IpmResult(status, xo, yo, zo, so, it, pres, dres, gap, pcost, dcost, history)
