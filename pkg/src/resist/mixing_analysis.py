"""Products of mixing matrices, ergodicity coefficients and consensus vectors."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

STOCH_TOL = 1e-10
RENORM_TOL = 1e-12


class MixingError(ValueError):
    pass


def _check_stochastic(A: np.ndarray, tol: float = STOCH_TOL) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise MixingError(f"expected a square matrix, got shape {A.shape}")
    if np.any(A < -tol) or np.any(np.abs(A.sum(axis=1) - 1.0) > tol):
        raise MixingError("matrix is not row-stochastic")
    return A


def renormalize_rows(A: np.ndarray) -> np.ndarray:
    """Rescale rows whose sum has drifted more than 1e-12 from one."""
    s = A.sum(axis=-1, keepdims=True)
    drift = np.abs(s - 1.0) > RENORM_TOL
    if np.any(drift):
        A = np.where(drift, A / s, A)
    return A


@dataclass
class TransitionProduct:
    matrix: np.ndarray
    span: tuple[int, int]


def transition_product(matrices: Sequence[np.ndarray], t0: int = 0) -> TransitionProduct:
    """Backward product: the last matrix in chronological order multiplies on the left."""
    if len(matrices) == 0:
        raise MixingError("need at least one matrix")
    first = _check_stochastic(matrices[0])
    P = first.copy()
    for Y in matrices[1:]:
        Y = _check_stochastic(Y)
        if Y.shape != P.shape:
            raise MixingError(f"dimension mismatch: {Y.shape} vs {P.shape}")
        P = renormalize_rows(Y @ P)
    return TransitionProduct(P, (t0, t0 + len(matrices) - 1))


def delta_ergodicity(A: np.ndarray) -> float:
    """Largest column-wise spread between two rows."""
    A = _check_stochastic(A)
    return float(np.max(A.max(axis=0) - A.min(axis=0)))


def lambda_ergodicity(A: np.ndarray) -> float:
    """One minus the smallest overlap between two rows."""
    A = _check_stochastic(A)
    overlap = np.minimum(A[:, None, :], A[None, :, :]).sum(axis=-1)
    return float(min(1.0, max(0.0, 1.0 - overlap.min())))


def is_scrambling(A: np.ndarray) -> bool:
    return lambda_ergodicity(A) < 1.0


def _delta_batch(P: np.ndarray) -> np.ndarray:
    return (P.max(axis=-2) - P.min(axis=-2)).max(axis=-1)


@dataclass
class ConsensusEstimate:
    converged: bool
    c: np.ndarray | None
    rounds_used: int
    delta: float


def estimate_consensus_vector(matrices: Iterable[np.ndarray], tol: float = 1e-10) -> ConsensusEstimate:
    """Left-multiply successive matrices until the rows agree to within ``tol``.

    ``matrices`` starts at the index whose consensus vector is wanted and runs
    forward in time.  Running out of matrices yields ``converged=False``.
    """
    P = None
    used = 0
    delta = math.inf
    for Y in matrices:
        Y = np.asarray(Y, dtype=float)
        P = Y.copy() if P is None else renormalize_rows(Y @ P)
        used += 1
        delta = float(_delta_batch(P))
        if delta < tol:
            c = np.clip(P.mean(axis=0), 0.0, None)
            return ConsensusEstimate(True, c / c.sum(), used, delta)
    return ConsensusEstimate(False, None, used, delta)


def consensus_vectors(blocks: np.ndarray, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Consensus vectors for every start index of a block sequence.

    ``blocks`` has shape ``(S, d, M, M)`` with one matrix per index and coordinate.
    Returns ``c`` of shape ``(S, d, M)`` and a boolean ``ok`` of shape ``(S,)``;
    entries whose tail never reached ``tol`` are NaN with ``ok`` false.
    """
    S, d, M, _ = blocks.shape
    c = np.full((S, d, M), np.nan)
    ok = np.zeros(S, dtype=bool)
    for s in range(S):
        P = blocks[s].copy()
        r = s
        while True:
            if np.all(_delta_batch(P) < tol):
                cs = np.clip(P.mean(axis=-2), 0.0, None)
                c[s] = cs / cs.sum(axis=-1, keepdims=True)
                ok[s] = True
                break
            r += 1
            if r >= S:
                break
            P = renormalize_rows(blocks[r] @ P)
    return c, ok


def beta(M: int, b: int) -> float:
    """Lower bound on non-trivial mixing weights, 1/(4b(M-2b+1))."""
    if b <= 0:
        raise MixingError("beta is undefined for b = 0")
    if not M > 2 * b:
        raise MixingError(f"need M > 2b, got M={M}, b={b}")
    alpha = 1.0 / (M - 2 * b + 1)
    return alpha / (4 * b)


def geometric_bound(beta_: float, tau: int, M: int, elapsed: int) -> float:
    """(1 - beta^(tau M))^floor(elapsed / (tau M)), evaluated without overflow."""
    window = tau * M
    log_bt = window * math.log(beta_)
    contraction = -math.expm1(log_bt) if log_bt > -745 else 1.0
    periods = elapsed // window
    if periods == 0 or contraction >= 1.0:
        return 1.0
    return math.exp(periods * math.log1p(-(1.0 - contraction)))


def fit_log_slope(values: Sequence[float], xs: Sequence[float] | None = None) -> tuple[float, float]:
    """Least-squares slope of log(values) against xs, and r^2."""
    y = np.log(np.asarray(values, dtype=float))
    x = np.arange(len(y), dtype=float) if xs is None else np.asarray(xs, dtype=float)
    if len(y) < 2:
        return 0.0, 1.0
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float((resid**2).sum()) / ss_tot
    return float(coef[0]), r2


@dataclass
class GeometricMixingReport:
    deltas: np.ndarray
    bound_holds: bool
    slope: float
    r2: float
    monotone: bool
    fit_range: tuple[int, int]
    checkpoints: list[tuple[int, float, float]] = field(default_factory=list)


def verify_geometric_mixing(
    matrices: Sequence[np.ndarray],
    beta_: float,
    tau: int,
    M: int,
    floor: float = 1e-13,
    monotone_tol: float = 1e-12,
    checkpoint_every: int = 10,
) -> GeometricMixingReport:
    """Check the prefix products Phi(t, 0) against the geometric mixing bound.

    The log-linear fit uses the prefix where delta is above ``floor``; below that
    the values sit at rounding level.
    """
    P = None
    deltas = []
    prods = []
    for Y in matrices:
        Y = np.asarray(Y, dtype=float)
        P = Y.copy() if P is None else renormalize_rows(Y @ P)
        prods.append(P)
        deltas.append(float(_delta_batch(P)))
    deltas_a = np.array(deltas)
    monotone = bool(np.all(np.diff(deltas_a) <= monotone_tol))

    # Phi(t, 0) tends to 1 c^T; the longest prefix is the best estimate of c.
    c = prods[-1].mean(axis=0) if prods else np.zeros(0)
    bound_holds = True
    checkpoints = []
    for t in range(0, len(prods), checkpoint_every):
        err = float(np.max(np.abs(prods[t] - c[None, :])))
        bnd = geometric_bound(beta_, tau, M, t + 1)
        checkpoints.append((t, err, bnd))
        if err > bnd + 1e-12:
            bound_holds = False

    above = np.flatnonzero(deltas_a > floor)
    if len(above) >= 2:
        stop = int(above[-1]) + 1
        slope, r2 = fit_log_slope(deltas_a[:stop])
    else:
        stop = len(above)
        slope, r2 = (-np.inf if len(deltas_a) else 0.0), 1.0
    return GeometricMixingReport(deltas_a, bound_holds, slope, r2, monotone, (0, stop), checkpoints)


def dump_checkpoints(products: Sequence[np.ndarray], path: str | Path, every: int = 1) -> None:
    """Write flattened Phi checkpoints as CSV rows ``t, i, j, value``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "i", "j", "value"])
        for t in range(0, len(products), every):
            P = products[t]
            for i in range(P.shape[0]):
                for j in range(P.shape[1]):
                    w.writerow([t, i, j, repr(float(P[i, j]))])
