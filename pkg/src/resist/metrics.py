"""Error sequences, heterogeneity diagnostics and rate fits over trajectories."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .mixing_analysis import consensus_vectors, fit_log_slope
from .objectives import LocalObjective, average_objective, centralized_solve
from .runner import Trajectory

CSV_COLUMNS = ["s", "t", "xi1_max", "xi5_max", "xi6", "fgap", "gradnorm2", "min_gradnorm2", "frob_triplet"]


def compute_xi5(W: np.ndarray, k: int) -> float:
    col = np.asarray(W, dtype=float)[:, k]
    return float(np.linalg.norm(col - col.mean()))


def compute_what(W: np.ndarray, chat: np.ndarray) -> np.ndarray:
    """Coordinate ``k`` of the result is ``chat[k] @ W[:, k]``; ``chat`` has shape ``(d, M)``."""
    W = np.asarray(W, dtype=float)
    return np.einsum("km,mk->k", np.asarray(chat, dtype=float), W)


def compute_xi1(W: np.ndarray, chat: np.ndarray, k: int) -> float:
    col = np.asarray(W, dtype=float)[:, k]
    return float(np.linalg.norm(col - np.asarray(chat[k]) @ col))


def compute_xi6(what: np.ndarray, wstar: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(wstar) - np.asarray(what)))


def uniform_chat(M: int, d: int) -> np.ndarray:
    return np.full((d, M), 1.0 / M)


def frobenius_triplet_direct(W: np.ndarray, what: np.ndarray, wstar: np.ndarray) -> float:
    """||W - mean||_F + ||1 w*^T - 1 what^T||_F + ||W - 1 what^T||_F."""
    M = W.shape[0]
    Wbar = np.broadcast_to(W.mean(axis=0), W.shape)
    What = np.broadcast_to(what, W.shape)
    Wstar = np.broadcast_to(wstar, W.shape)
    return float(np.linalg.norm(W - Wbar) + np.linalg.norm(Wstar - What) + np.linalg.norm(W - What))


def frobenius_triplet(xi5: np.ndarray, xi6: float, xi1: np.ndarray, M: int) -> float:
    return float(math.sqrt(float(np.sum(np.square(xi5)))) + math.sqrt(M) * xi6 + math.sqrt(float(np.sum(np.square(xi1)))))


def compute_heterogeneity(
    objectives: Sequence[LocalObjective],
    wstar: np.ndarray,
    whats: Sequence[np.ndarray] = (),
    chats_next: Sequence[np.ndarray] = (),
) -> tuple[float, float]:
    """Delta (sum of distances from local minimizers to ``wstar``) and an estimate of C0.

    The C0 estimate is the running max over the supplied iterates of
    ``sum_k |grad_k f(what) - sum_j c_k[j] grad_k f_j(what)|``; it is only a
    lower estimate of the supremum.
    """
    delta = 0.0
    for o in objectives:
        wi, _ = centralized_solve([o])
        delta += float(np.linalg.norm(np.asarray(wstar) - wi))
    c0 = 0.0
    for what, chat in zip(whats, chats_next):
        G = np.array([o.grad(what) for o in objectives])
        exact = G.mean(axis=0)
        weighted = np.einsum("km,mk->k", chat, G)
        c0 = max(c0, float(np.abs(exact - weighted).sum()))
    return delta, c0


def fit_geometric_rate(series: Sequence[float], burn_in: int = 0) -> tuple[float, float]:
    """Slope of log(series) against the index, from ``burn_in`` on, with r^2."""
    y = np.asarray(series, dtype=float)[burn_in:]
    if np.any(y <= 0):
        raise ValueError("series must be positive after burn-in")
    return fit_log_slope(y, np.arange(burn_in, burn_in + len(y)))


@dataclass
class MetricsLog:
    s: np.ndarray
    t: np.ndarray
    xi1: np.ndarray
    xi5: np.ndarray
    xi6: np.ndarray
    fgap: np.ndarray
    gradnorm2: np.ndarray
    min_gradnorm2: np.ndarray
    frob_triplet: np.ndarray
    what: np.ndarray
    c0_estimate: float = 0.0
    delta: float | None = None
    extra: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.s)

    def rows(self):
        for i in range(len(self.s)):
            yield [
                int(self.s[i]),
                int(self.t[i]),
                float(self.xi1[i].max()),
                float(self.xi5[i].max()),
                float(self.xi6[i]),
                float(self.fgap[i]),
                float(self.gradnorm2[i]),
                float(self.min_gradnorm2[i]),
                float(self.frob_triplet[i]),
            ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows():
            w.writerow([r[0], r[1]] + [repr(v) for v in r[2:]])
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        with open(path, "x") as fh:
            fh.write(self.to_csv())


def metrics_from_trajectory(
    traj: Trajectory,
    objectives: Sequence[LocalObjective],
    wstar: np.ndarray,
    fstar: float,
    tol: float = 1e-10,
    uniform: bool = False,
) -> MetricsLog:
    """Build the log for every s whose consensus vector could be estimated.

    With ``uniform`` (or when no mixing blocks were recorded) the plain node
    average stands in for the consensus vector.
    """
    W_s = traj.W_s
    S1, M, d = W_s.shape
    honest = [j for j in range(M) if j not in traj.config.byzantine]
    if uniform or traj.blocks is None:
        chats = np.broadcast_to(uniform_chat(M, d), (S1, d, M)).copy()
        ok = np.ones(S1, dtype=bool)
    else:
        c, okb = consensus_vectors(traj.blocks, tol)
        chats = c
        ok = okb
        if len(ok) < S1:
            # The final snapshot has no block after it.
            chats = np.concatenate([chats, np.full((S1 - len(ok), d, M), np.nan)])
            ok = np.concatenate([ok, np.zeros(S1 - len(ok), dtype=bool)])
    keep = np.flatnonzero(ok)
    F = average_objective(objectives)
    xi1 = np.zeros((len(keep), d))
    xi5 = np.zeros((len(keep), d))
    xi6 = np.zeros(len(keep))
    fgap = np.zeros(len(keep))
    gn2 = np.zeros(len(keep))
    frob = np.zeros(len(keep))
    whats = np.zeros((len(keep), d))
    for r, s in enumerate(keep):
        W = W_s[s][honest] if len(honest) < M else W_s[s]
        ch = chats[s][:, honest] if len(honest) < M else chats[s]
        ch = ch / ch.sum(axis=1, keepdims=True)
        what = compute_what(W, ch)
        whats[r] = what
        xi1[r] = [compute_xi1(W, ch, k) for k in range(d)]
        xi5[r] = [compute_xi5(W, k) for k in range(d)]
        xi6[r] = compute_xi6(what, wstar)
        fgap[r] = max(F.eval(what) - fstar, 0.0)
        g = F.grad(what)
        gn2[r] = float(g @ g)
        frob[r] = frobenius_triplet(xi5[r], xi6[r], xi1[r], W.shape[0])
    mins = np.minimum.accumulate(gn2) if len(gn2) else gn2
    c0 = 0.0
    for r, s in enumerate(keep):
        if s + 1 < S1 and ok[s + 1]:
            G = np.array([o.grad(whats[r]) for o in objectives])
            weighted = np.einsum("km,mk->k", chats[s + 1], G)
            c0 = max(c0, float(np.abs(G.mean(axis=0) - weighted).sum()))
    return MetricsLog(keep, traj.t_of_s[keep], xi1, xi5, xi6, fgap, gn2, mins, frob, whats, c0)
