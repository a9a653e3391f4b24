"""Independent KKT residual evaluation for cone programs.

Recomputes everything from the problem data and a primal-dual point; shares
no state with the interior-point loop.
"""
from __future__ import annotations

import numpy as np


def _max_abs(v) -> float:
    v = np.asarray(v, float)
    return float(np.max(np.abs(v))) if v.size else 0.0


def cone_distance(v: np.ndarray, l: int, q: list[int]) -> float:
    """How far ``v`` is outside ``R+^l x Q^{q_1} x ...`` (0 when inside)."""
    worst = max(0.0, -float(np.min(v[:l]))) if l else 0.0
    off = l
    for d in q:
        blk = v[off:off + d]
        worst = max(worst, float(np.linalg.norm(blk[1:]) - blk[0]))
        off += d
    return worst


def kkt_residuals(c, A, b, G, h, l, q, x, y, z, s=None) -> dict[str, float]:
    """Relative primal, dual and complementarity residuals plus cone distances.

    Primal:  max(|Ax-b|_inf / max(1,|b|_inf), |Gx+s-h|_inf / max(1,|h|_inf))
    Dual:    |c + A'y + G'z|_inf / max(1, |c|_inf)
    Gap:     s'z / max(1, min(|c'x|, |b'y + h'z|))
    When ``s`` is omitted the primal slack ``h - Gx`` is used.
    """
    c, b, h = (np.asarray(v, float) for v in (c, b, h))
    x, y, z = (np.asarray(v, float) for v in (x, y, z))
    s = h - G @ x if s is None else np.asarray(s, float)
    nb, nh, nc = max(1.0, _max_abs(b)), max(1.0, _max_abs(h)), max(1.0, _max_abs(c))
    primal = max(_max_abs(A @ x - b) / nb if b.size else 0.0,
                 _max_abs(G @ x + s - h) / nh if h.size else 0.0)
    dual = _max_abs(c + A.T @ y + G.T @ z) / nc
    pcost = float(c @ x)
    dcost = float(-b @ y - h @ z)
    gap = float(s @ z)
    return dict(primal=primal, dual=dual,
                gap=abs(gap) / max(1.0, min(abs(pcost), abs(dcost))),
                duality_gap=abs(pcost - dcost) / max(1.0, min(abs(pcost), abs(dcost))),
                slack_cone=cone_distance(s, l, q) / nh,
                dual_cone=cone_distance(z, l, q) / nc,
                pcost=pcost, dcost=dcost)
