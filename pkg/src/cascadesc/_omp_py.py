"""Pure-Python batch OMP, used when the compiled extension is unavailable.

Mirrors ``_omp_ext.omp_batch`` step for step (same selection order, same
Cholesky growth and stopping tests) so both backends agree to rounding.
"""

from __future__ import annotations

import math

import numpy as np


def _encode(Dt, G, y, mk, T, eps2, min_corr, min_energy):
    m, n = Dt.shape
    ym = y * mk if mk is not None else y.copy()
    if mk is not None:
        norms = np.sqrt(np.einsum("ji,ji,i->j", Dt, Dt, mk))
        floor2 = max(min_energy * float(mk.sum()) / n, 1e-20)
    alpha = Dt @ ym
    r = ym.copy()
    rn2 = float(r @ r)
    L = np.zeros((T, T))
    sel: list[int] = []
    x = np.zeros(0)
    while len(sel) < T and rn2 > eps2:
        k = len(sel)
        corr = np.abs(alpha) if k == 0 else np.abs(Dt @ r)
        if mk is not None:
            usable = norms * norms >= floor2
            corr = np.where(usable, corr / np.where(usable, norms, 1.0), 0.0)
        corr[sel] = 0.0
        best = int(np.argmax(corr))
        if not corr[best] > min_corr:
            break

        if mk is not None:
            gij = norms[best] ** 2
            col = (Dt[sel] * mk) @ Dt[best]
        else:
            gij = G[best, best]
            col = G[sel, best]
        w = np.zeros(k)
        for p in range(k):
            w[p] = (col[p] - L[p, :p] @ w[:p]) / L[p, p]
        d = gij - float(w @ w)
        if d <= 1e-10 * gij:
            break
        L[k, :k] = w
        L[k, k] = math.sqrt(d)
        sel.append(best)
        k += 1

        rhs = alpha[sel]
        z = np.zeros(k)
        for p in range(k):
            z[p] = (rhs[p] - L[p, :p] @ z[:p]) / L[p, p]
        x = np.zeros(k)
        for p in range(k - 1, -1, -1):
            x[p] = (z[p] - L[p + 1 : k, p] @ x[p + 1 : k]) / L[p, p]

        approx = x @ Dt[sel]
        r = ym - (approx * mk if mk is not None else approx)
        rn2 = float(r @ r)
    return sel, x


def omp_batch(Dt, G, Yt, masks, T, eps2, min_known, min_corr, min_energy,
              idx_out, coef_out, skipped, start, stop):
    n = Dt.shape[1]
    use_mask = masks.shape[0] > 0
    for col in range(start, stop):
        mk = None
        cap = T
        if use_mask:
            known = int(np.count_nonzero(masks[col]))
            if known < min_known:
                skipped[col] = 1
                continue
            if known < n:
                mk = masks[col]
                cap = min(cap, known)
        sel, x = _encode(Dt, G, Yt[col], mk, cap, eps2, min_corr, min_energy)
        idx_out[col, : len(sel)] = sel
        coef_out[col, : len(sel)] = x
