"""Pure numpy versions of the per-round screening kernels.

Layout shared with the compiled module: in-neighbors of node ``j`` are
``indices[indptr[j]:indptr[j+1]]`` in ascending id order, and ``received``
holds one row per in-link with the value that actually arrived.
"""

from __future__ import annotations

import numpy as np

THETA_EPS = 1e-15


def cwtm_round(W, indptr, indices, received, b):
    M, d = W.shape
    out = np.empty_like(W)
    for j in range(M):
        lo, hi = indptr[j], indptr[j + 1]
        n = hi - lo
        vals = np.sort(received[lo:hi], axis=0)
        out[j] = (W[j] + vals[b:n - b].sum(axis=0)) / (n - 2 * b + 1)
    return out


def mixing_round(W, indptr, indices, received, compromised, b):
    """Per-coordinate mixing matrices, shape ``(d, M, M)``, plus ``q`` of shape ``(M, d)``."""
    M, d = W.shape
    Y = np.zeros((d, M, M))
    Q = np.zeros((M, d), dtype=np.int64)
    kk = np.arange(d)
    for j in range(M):
        lo, hi = indptr[j], indptr[j + 1]
        n = hi - lo
        inv = 1.0 / (n - 2 * b + 1)
        nbrs = np.asarray(indices[lo:hi])
        vals = received[lo:hi]
        comp = np.asarray(compromised[lo:hi], dtype=bool)
        order = np.argsort(vals, axis=0, kind="stable")
        low, cen, up = order[:b], order[b:n - b], order[n - b:]
        Yj = Y[:, j, :]
        Yj[:, j] += inv

        cc = comp[cen]
        q = b - int(comp.sum()) + cc.sum(axis=0)
        Q[j] = q
        spread = q > 0
        direct = np.where(spread[None, :], np.where(cc, 0.0, 0.5 * inv), inv)
        np.add.at(Yj, (np.broadcast_to(kk, cen.shape), nbrs[cen]), direct)
        if not spread.any() or b == 0:
            continue

        hu, hl = ~comp[up], ~comp[low]
        cnt_u, cnt_l = hu.sum(axis=0), hl.sum(axis=0)
        if np.any(spread & ((cnt_u == 0) | (cnt_l == 0))):
            raise RuntimeError(f"node {j}: no honest node in upper or lower set while q > 0")
        safe_u, safe_l = np.maximum(cnt_u, 1), np.maximum(cnt_l, 1)
        u_val = (np.take_along_axis(vals, up, axis=0) * hu).sum(axis=0) / safe_u
        l_val = (np.take_along_axis(vals, low, axis=0) * hl).sum(axis=0) / safe_l
        cv = np.take_along_axis(vals, cen, axis=0)
        gap = u_val - l_val
        theta = np.where(gap > 0, (cv - l_val) / np.where(gap > 0, gap, 1.0), 0.5)
        theta = np.clip(theta, THETA_EPS, 1.0 - THETA_EPS)
        mass = np.where(cc, inv, 0.5 * inv)
        s_up = np.where(spread, (mass * theta).sum(axis=0), 0.0)
        s_low = np.where(spread, (mass * (1.0 - theta)).sum(axis=0), 0.0)
        np.add.at(Yj, (np.broadcast_to(kk, up.shape), nbrs[up]), np.where(hu, s_up / safe_u, 0.0))
        np.add.at(Yj, (np.broadcast_to(kk, low.shape), nbrs[low]), np.where(hl, s_low / safe_l, 0.0))
    return Y, Q
