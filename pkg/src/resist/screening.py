"""Robust aggregation rules and the mixing-matrix reconstruction oracle.

Candidates are identified by node id; a node's own value takes part in
median, Krum and Bulyan with id ``-1`` so it wins exact ties.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

THETA_EPS = 1e-15


class ScreeningError(ValueError):
    pass


Received = Sequence[tuple[int, np.ndarray]]


def _stack(received: Received) -> tuple[np.ndarray, np.ndarray]:
    ids = np.array([int(i) for i, _ in received], dtype=np.int64)
    vals = np.array([np.asarray(v, dtype=float) for _, v in received], dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    order = np.argsort(ids, kind="stable")
    return ids[order], vals[order]


def _check_finite(*arrays: np.ndarray) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ScreeningError("screening inputs must be finite")


def trim_sets(received: Received, b: int, k: int, rng: np.random.Generator | None = None):
    """Lower, upper and center id sets for coordinate ``k``.

    Ties go to the smaller node id unless ``rng`` is given, in which case equal
    values are ordered at random.
    """
    ids, vals = _stack(received)
    n = len(ids)
    col = vals[:, k]
    tiebreak = ids if rng is None else rng.permutation(n)
    order = np.lexsort((tiebreak, col))
    lower = [int(ids[p]) for p in order[:b]]
    upper = [int(ids[p]) for p in order[n - b:]] if b else []
    center = [int(ids[p]) for p in order[b:n - b]]
    return lower, upper, center


def cwtm(self_value, received: Received, b: int) -> np.ndarray:
    """Coordinate-wise trimmed mean of the received values and the node's own value."""
    w = np.atleast_1d(np.asarray(self_value, dtype=float))
    n = len(received)
    if b < 0 or not b < (n + 1) / 2 or n - 2 * b < 0:
        raise ScreeningError(f"b={b} too large for a neighborhood of {n}")
    if n == 0:
        return w.copy()
    _, vals = _stack(received)
    _check_finite(w, vals)
    kept = np.sort(vals, axis=0)[b:n - b]
    return (w + kept.sum(axis=0)) / (n - 2 * b + 1)


def _candidates(self_value, received: Received) -> tuple[np.ndarray, np.ndarray]:
    w = np.atleast_1d(np.asarray(self_value, dtype=float))
    if len(received):
        ids, vals = _stack(received)
        ids = np.concatenate([[-1], ids])
        vals = np.vstack([w[None, :], vals])
    else:
        ids, vals = np.array([-1]), w[None, :]
    _check_finite(vals)
    return ids, vals


def coordinate_median(self_value, received: Received) -> np.ndarray:
    _, vals = _candidates(self_value, received)
    return np.median(vals, axis=0)


def _krum_scores(vals: np.ndarray, b: int) -> np.ndarray:
    n = len(vals)
    diff = vals[:, None, :] - vals[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    m = max(n - b - 2, 1)
    scores = np.empty(n)
    for i in range(n):
        others = np.delete(d2[i], i)
        scores[i] = np.sort(others)[:m].sum()
    return scores


def _krum_pick(ids: np.ndarray, vals: np.ndarray, b: int) -> int:
    scores = _krum_scores(vals, b)
    best = np.flatnonzero(scores == scores.min())
    return int(best[np.argmin(ids[best])])


def krum(self_value, received: Received, b: int) -> np.ndarray:
    ids, vals = _candidates(self_value, received)
    if len(ids) < 2 * b + 3:
        raise ScreeningError(f"krum needs at least {2 * b + 3} candidates, got {len(ids)}")
    return vals[_krum_pick(ids, vals, b)].copy()


def bulyan(self_value, received: Received, b: int) -> np.ndarray:
    ids, vals = _candidates(self_value, received)
    if len(ids) < 4 * b + 3:
        raise ScreeningError(f"bulyan needs at least {4 * b + 3} candidates, got {len(ids)}")
    pool_ids, pool_vals = ids.copy(), vals.copy()
    chosen = []
    for _ in range(2 * b + 3):
        p = _krum_pick(pool_ids, pool_vals, b)
        chosen.append(pool_vals[p])
        pool_ids = np.delete(pool_ids, p)
        pool_vals = np.delete(pool_vals, p, axis=0)
    sel = np.sort(np.array(chosen), axis=0)
    return sel[b:len(sel) - b].mean(axis=0)


@dataclass
class MixingRow:
    node: int
    k: int
    weights: np.ndarray
    q: int
    b_star: int
    b_k: int
    lower: list[int] = field(default_factory=list)
    upper: list[int] = field(default_factory=list)
    center: list[int] = field(default_factory=list)
    theta: dict[int, float] = field(default_factory=dict)


def build_mixing_row_oracle(
    j: int,
    k: int,
    self_value,
    received_values: Received,
    compromised_in_links: Iterable[int],
    b: int,
    M: int,
    rng: np.random.Generator | None = None,
) -> MixingRow:
    """Row ``j`` of the coordinate-``k`` mixing matrix for one consensus round.

    ``received_values`` holds what actually arrived on each in-link; values from
    sources in ``compromised_in_links`` may be arbitrary and receive zero weight.
    When some trimmed honest value must stand in for a center value (``q > 0``),
    each center value is written as a convex combination of the mean honest upper
    value and the mean honest lower value, and the mass is spread evenly over
    those honest nodes.  Honest center nodes keep half their mass directly.
    """
    w = np.atleast_1d(np.asarray(self_value, dtype=float))
    ids, vals = _stack(received_values)
    n = len(ids)
    if not b < (n + 1) / 2 or n - 2 * b < 0:
        raise ScreeningError(f"b={b} too large for a neighborhood of {n}")
    value = {int(i): float(v[k]) for i, v in zip(ids, vals)}
    bad = {int(i) for i in compromised_in_links}
    if len(bad) > b:
        raise ScreeningError(f"{len(bad)} compromised in-links exceed b={b}")
    lower, upper, center = trim_sets(received_values, b, k, rng)
    inv = 1.0 / (n - 2 * b + 1)
    row = np.zeros(M)
    row[j] += inv
    b_star = len(bad & set(ids.tolist()))
    b_k = sum(1 for i in center if i in bad)
    q = b - b_star + b_k
    thetas: dict[int, float] = {}
    if q == 0:
        for i in center:
            row[i] += inv
    else:
        hu = [i for i in upper if i not in bad]
        hl = [i for i in lower if i not in bad]
        if not hu or not hl:
            raise RuntimeError(f"node {j}: no honest node in upper or lower set while q > 0")
        u_val = sum(value[i] for i in hu) / len(hu)
        l_val = sum(value[i] for i in hl) / len(hl)
        gap = u_val - l_val
        s_up = s_low = 0.0
        for i in center:
            if i in bad:
                mass = inv
            else:
                mass = 0.5 * inv
                row[i] += 0.5 * inv
            th = (value[i] - l_val) / gap if gap > 0 else 0.5
            th = min(max(th, THETA_EPS), 1.0 - THETA_EPS)
            thetas[i] = th
            s_up += mass * th
            s_low += mass * (1.0 - th)
        for i in hu:
            row[i] += s_up / len(hu)
        for i in hl:
            row[i] += s_low / len(hl)
    return MixingRow(j, k, row, q, b_star, b_k, lower, upper, center, thetas)


def build_mixing_matrix(
    W: np.ndarray,
    received: Sequence[Received],
    compromised: Sequence[Iterable[int]],
    b: int,
    k: int,
) -> np.ndarray:
    """Stack oracle rows: ``received[j]`` and ``compromised[j]`` describe node ``j``'s inbox."""
    M = W.shape[0]
    return np.vstack(
        [build_mixing_row_oracle(j, k, W[j], received[j], compromised[j], b, M).weights for j in range(M)]
    )


RULES = ("cwtm", "median", "krum", "bulyan", "mean")


def aggregate(rule: str, self_value, received: Received, b: int) -> np.ndarray:
    """Dispatch one node's screening step by rule name."""
    if rule == "cwtm":
        return cwtm(self_value, received, b)
    if rule == "median":
        return coordinate_median(self_value, received)
    if rule == "krum":
        return krum(self_value, received, b)
    if rule == "bulyan":
        return bulyan(self_value, received, b)
    if rule == "mean":
        _, vals = _candidates(self_value, received)
        return vals.mean(axis=0)
    raise ScreeningError(f"unknown screening rule {rule!r}")
