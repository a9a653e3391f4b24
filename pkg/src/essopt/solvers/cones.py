"""Vectorized operations on products of nonnegative orthants and second-order cones.

A vector in ``K = R+^l x Q^{q_1} x ...`` is stored flat: the first ``l``
entries are the orthant part, then each cone block in order. Cone blocks of
equal size are grouped so that every operation is a handful of numpy calls.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


class ConeSet:
    def __init__(self, l: int, q: list[int]):
        self.l = l
        self.q = list(q)
        self.m = l + sum(q)
        self.degree = l + len(q)
        groups: dict[int, list[int]] = {}
        off = l
        for d in q:
            groups.setdefault(d, []).append(off)
            off += d
        # size -> (n_cones, size) index array into the flat vector
        self.groups = {d: np.asarray(starts)[:, None] + np.arange(d)[None, :]
                       for d, starts in sorted(groups.items())}

    # -- basic algebra ---------------------------------------------------
    def identity(self) -> np.ndarray:
        e = np.zeros(self.m)
        e[: self.l] = 1.0
        for idx in self.groups.values():
            e[idx[:, 0]] = 1.0
        return e

    def min_eig(self, u: np.ndarray) -> float:
        vals = [u[: self.l]] if self.l else []
        for idx in self.groups.values():
            blk = u[idx]
            vals.append(blk[:, 0] - np.linalg.norm(blk[:, 1:], axis=1))
        if not vals:
            return np.inf
        return float(min(v.min() for v in vals if v.size))

    def jprod(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        out = np.empty(self.m)
        out[: self.l] = u[: self.l] * v[: self.l]
        for idx in self.groups.values():
            ub, vb = u[idx], v[idx]
            res = np.empty_like(ub)
            res[:, 0] = np.einsum("ij,ij->i", ub, vb)
            res[:, 1:] = ub[:, :1] * vb[:, 1:] + vb[:, :1] * ub[:, 1:]
            out[idx] = res
        return out

    def jdiv(self, lam: np.ndarray, r: np.ndarray) -> np.ndarray:
        """Solve ``lam o d = r`` for ``d``."""
        out = np.empty(self.m)
        out[: self.l] = r[: self.l] / lam[: self.l]
        for idx in self.groups.values():
            lb, rb = lam[idx], r[idx]
            l0, l1 = lb[:, 0], lb[:, 1:]
            nl = np.linalg.norm(l1, axis=1)
            det = (l0 - nl) * (l0 + nl)
            d0 = (l0 * rb[:, 0] - np.einsum("ij,ij->i", l1, rb[:, 1:])) / det
            res = np.empty_like(lb)
            res[:, 0] = d0
            res[:, 1:] = (rb[:, 1:] - d0[:, None] * l1) / l0[:, None]
            out[idx] = res
        return out

    def max_step(self, u: np.ndarray, d: np.ndarray) -> float:
        """Largest ``a`` with ``u + a d`` in the cone (``u`` interior); ``inf`` if unbounded."""
        best = np.inf
        if self.l:
            dl = d[: self.l]
            neg = dl < 0
            if neg.any():
                best = float(np.min(-u[: self.l][neg] / dl[neg]))
        for idx in self.groups.values():
            ub, db = u[idx], d[idx]
            nu = np.linalg.norm(ub[:, 1:], axis=1)
            c = (ub[:, 0] - nu) * (ub[:, 0] + nu)
            a = db[:, 0] ** 2 - np.einsum("ij,ij->i", db[:, 1:], db[:, 1:])
            bq = ub[:, 0] * db[:, 0] - np.einsum("ij,ij->i", ub[:, 1:], db[:, 1:])
            # smallest positive root of a t^2 + 2 bq t + c = 0, c > 0
            disc = bq * bq - a * c
            roots = np.full(c.shape, np.inf)
            with np.errstate(divide="ignore", invalid="ignore"):
                sq = np.sqrt(np.maximum(disc, 0.0))
                qq = -(bq + np.where(bq >= 0, sq, -sq))
                r1 = np.where(a != 0, qq / a, np.inf)
                r2 = np.where(qq != 0, c / qq, np.inf)
            for r in (r1, r2):
                ok = (r > 0) & (disc >= 0)
                roots = np.where(ok, np.minimum(roots, r), roots)
            lin = (a == 0) & (bq < 0)
            roots = np.where(lin, np.minimum(roots, -c / (2 * np.where(lin, bq, -1.0))), roots)
            if roots.size:
                best = min(best, float(roots.min()))
        return best

    # -- Nesterov-Todd scaling -------------------------------------------
    def nt_scaling(self, s: np.ndarray, z: np.ndarray) -> "Scaling":
        w = np.sqrt(s[: self.l] / z[: self.l])
        blocks = {}
        for d, idx in self.groups.items():
            sb, zb = s[idx], z[idx]
            ns = np.linalg.norm(sb[:, 1:], axis=1)
            nz = np.linalg.norm(zb[:, 1:], axis=1)
            sdet = np.sqrt((sb[:, 0] - ns) * (sb[:, 0] + ns))
            zdet = np.sqrt((zb[:, 0] - nz) * (zb[:, 0] + nz))
            sbar = sb / sdet[:, None]
            zbar = zb / zdet[:, None]
            gamma = np.sqrt((1.0 + np.einsum("ij,ij->i", sbar, zbar)) / 2.0)
            wbar = sbar.copy()
            wbar[:, 0] += zbar[:, 0]
            wbar[:, 1:] -= zbar[:, 1:]
            wbar /= (2.0 * gamma)[:, None]
            v = wbar.copy()
            v[:, 0] += 1.0
            v /= np.sqrt(2.0 * (wbar[:, 0] + 1.0))[:, None]
            beta = np.sqrt(sdet / zdet)
            blocks[d] = (beta, v)
        return Scaling(self, w, blocks)


@dataclass
class Scaling:
    cones: ConeSet
    w: np.ndarray
    blocks: dict

    def _apply(self, u: np.ndarray, inverse: bool) -> np.ndarray:
        K = self.cones
        out = np.empty_like(u)
        out[: K.l] = u[: K.l] / self.w if inverse else u[: K.l] * self.w
        for d, idx in K.groups.items():
            beta, v = self.blocks[d]
            ub = u[idx]
            if inverse:
                # (1/beta) (2 J v v' J - J) u
                Jv = v.copy()
                Jv[:, 1:] *= -1
                Ju = ub.copy()
                Ju[:, 1:] *= -1
                res = 2.0 * np.einsum("ij,ij->i", Jv, ub)[:, None] * Jv - Ju
                res /= beta[:, None]
            else:
                Ju = ub.copy()
                Ju[:, 1:] *= -1
                res = 2.0 * np.einsum("ij,ij->i", v, ub)[:, None] * v - Ju
                res *= beta[:, None]
            out[idx] = res
        return out

    def W(self, u):
        return self._apply(u, inverse=False)

    def Winv(self, u):
        return self._apply(u, inverse=True)

    def WtW(self) -> sp.csc_matrix:
        K = self.cones
        rows = [np.arange(K.l)]
        cols = [np.arange(K.l)]
        data = [self.w ** 2]
        for d, idx in K.groups.items():
            beta, v = self.blocks[d]
            J = np.ones(d)
            J[1:] = -1.0
            M = 2.0 * v[:, :, None] * v[:, None, :]
            M[:, np.arange(d), np.arange(d)] -= J
            M2 = np.einsum("nij,njk->nik", M, M) * (beta ** 2)[:, None, None]
            rows.append(np.repeat(idx, d, axis=1).ravel())
            cols.append(np.tile(idx, (1, d)).ravel())
            data.append(M2.ravel())
        return sp.csc_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(K.m, K.m))
