"""Local loss functions, synthetic data, partitioning and reference solvers."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp, softmax

from .rng import substream

Kind = Literal["strongly-convex", "pl", "nonconvex"]


class ObjectiveError(ValueError):
    pass


@dataclass(frozen=True)
class LocalObjective:
    eval: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    dim: int
    kind: Kind
    mu: float | None = None
    L: float | None = None
    hess: Callable[[np.ndarray], np.ndarray] | None = None
    minimizer: np.ndarray | None = None
    name: str = ""

    def __call__(self, w) -> float:
        return self.eval(np.asarray(w, dtype=float))


# ---------------------------------------------------------------- quadratics


def make_quadratic(targets, lam: float = 0.0) -> list[LocalObjective]:
    """f_j(w) = 0.5 ||w - a_j||^2 + 0.5 lam ||w||^2, one per row of ``targets``."""
    A = np.atleast_2d(np.asarray(targets, dtype=float))
    if A.shape[1] < 1:
        raise ObjectiveError("need d >= 1")
    if lam < 0:
        raise ObjectiveError("lam must be non-negative")
    d = A.shape[1]
    c = 1.0 + lam
    objs = []
    for a in A:
        a = a.copy()

        def ev(w, a=a):
            w = np.asarray(w, dtype=float)
            return 0.5 * float((w - a) @ (w - a)) + 0.5 * lam * float(w @ w)

        def gr(w, a=a):
            w = np.asarray(w, dtype=float)
            return c * w - a

        objs.append(
            LocalObjective(ev, gr, d, "strongly-convex", c, c, lambda w: c * np.eye(d), a / c, "quadratic")
        )
    return objs


# ------------------------------------------------------------------ logistic


def make_logistic_l2(features, labels, lam: float, n_classes: int | None = None) -> LocalObjective:
    """Mean multinomial cross-entropy of a linear classifier plus 0.5 lam ||w||^2.

    ``w`` is the flattened ``(n_classes, n_features)`` weight matrix.  Append a
    constant column to ``features`` for an intercept.
    """
    if not lam > 0:
        raise ObjectiveError("lam must be positive")
    X = np.atleast_2d(np.asarray(features, dtype=float))
    y = np.asarray(labels, dtype=np.int64)
    if len(X) != len(y) or len(X) == 0:
        raise ObjectiveError("features and labels must be non-empty and aligned")
    C = int(n_classes if n_classes is not None else y.max() + 1)
    N, p = X.shape
    Y1 = np.zeros((N, C))
    Y1[np.arange(N), y] = 1.0

    def ev(w):
        Wm = np.asarray(w, dtype=float).reshape(C, p)
        Z = X @ Wm.T
        ce = float(np.mean(logsumexp(Z, axis=1) - Z[np.arange(N), y]))
        return ce + 0.5 * lam * float(Wm.ravel() @ Wm.ravel())

    def gr(w):
        Wm = np.asarray(w, dtype=float).reshape(C, p)
        P = softmax(X @ Wm.T, axis=1)
        return ((P - Y1).T @ X / N + lam * Wm).ravel()

    # 0.5 * largest eigenvalue of X^T X / N bounds the softmax curvature.
    L = 0.5 * float(np.linalg.eigvalsh(X.T @ X / N)[-1]) + lam
    return LocalObjective(ev, gr, C * p, "strongly-convex", lam, L, None, None, "logistic")


def gaussian_blobs(n: int, n_classes: int, dim: int, seed: int, spread: float = 1.0, sep: float = 2.0):
    """Balanced Gaussian clusters with centers drawn once per seed; returns ``(X, y)``."""
    rng = substream(seed, "data")
    centers = rng.normal(0.0, sep, size=(n_classes, dim))
    y = np.arange(n) % n_classes
    X = centers[y] + rng.normal(0.0, spread, size=(n, dim))
    perm = rng.permutation(n)
    return X[perm], y[perm]


def add_intercept(X: np.ndarray) -> np.ndarray:
    return np.hstack([X, np.ones((len(X), 1))])


@dataclass
class PartitionedDataset:
    parts: list[tuple[np.ndarray, np.ndarray]]
    mode: str
    N: int
    dropped: int = 0

    @property
    def M(self) -> int:
        return len(self.parts)


def partition_data(X, y, M: int, mode: str = "iid", seed: int = 0) -> PartitionedDataset:
    """Split a labelled dataset over ``M`` nodes with equal counts.

    ``extreme`` hands out label-sorted contiguous blocks; ``moderate`` cuts the
    label-sorted data into ``2M`` shards and gives node ``j`` shards ``j`` and
    ``2M-1-j``, so each node holds two labels' worth of samples.
    """
    X = np.asarray(X)
    y = np.asarray(y)
    if M < 1:
        raise ObjectiveError("M must be positive")
    if mode not in ("iid", "moderate", "extreme"):
        raise ObjectiveError(f"unknown partition mode {mode!r}")
    n = len(y)
    unit = 2 * M if (mode == "moderate" and M > 1) else M
    keep = n - n % unit
    if keep == 0:
        raise ObjectiveError(f"dataset of {n} samples too small for {M} nodes")
    if keep < n:
        warnings.warn(f"dropping {n - keep} samples so every node gets the same count", stacklevel=2)
    if mode == "iid":
        order = substream(seed, "partition").permutation(n)[:keep]
    else:
        order = np.argsort(y, kind="stable")[:keep]
    N = keep // M
    if mode == "moderate" and M > 1:
        shards = np.split(order, 2 * M)
        idx = [np.concatenate([shards[j], shards[2 * M - 1 - j]]) for j in range(M)]
    else:
        idx = np.split(order, M)
    return PartitionedDataset([(X[i], y[i]) for i in idx], mode, N, n - keep)


def label_flip(data: PartitionedDataset, nodes, n_classes: int) -> PartitionedDataset:
    """Replace label ``c`` with ``n_classes - 1 - c`` on the given nodes."""
    flip = set(int(j) for j in nodes)
    parts = [(Xj, (n_classes - 1 - yj) if j in flip else yj.copy()) for j, (Xj, yj) in enumerate(data.parts)]
    return PartitionedDataset(parts, data.mode, data.N, data.dropped)


# ----------------------------------------------------------- PL sine family


def _sine_parts(w):
    x, y = float(w[0]), float(w[1])
    r = y - math.sin(x)
    return x, y, r


def make_pl_sine() -> LocalObjective:
    """f(x, y) = 0.5 (y - sin x)^2, zero on the curve y = sin x."""

    def ev(w):
        _, _, r = _sine_parts(w)
        return 0.5 * r * r

    def gr(w):
        x, _, r = _sine_parts(w)
        return np.array([-r * math.cos(x), r])

    def he(w):
        x, _, r = _sine_parts(w)
        c, s = math.cos(x), math.sin(x)
        return np.array([[c * c + r * s, -c], [-c, 1.0]])

    return LocalObjective(ev, gr, 2, "pl", 1.0, None, he, np.array([0.0, 0.0]), "pl-sine")


def _shifted_sine(w):
    x, y = float(w[0]), float(w[1])
    return x, y, y - 3.0 - math.sin(x - 3.0)


def make_pl_sum_counterexample() -> LocalObjective:
    """f + g with g(x, y) = 0.25 (y - 3 - sin(x - 3))^2; has saddles, so not PL."""
    f = make_pl_sine()

    def ev(w):
        _, _, r = _shifted_sine(w)
        return f.eval(w) + 0.25 * r * r

    def gr(w):
        x, _, r = _shifted_sine(w)
        return f.grad(w) + 0.5 * r * np.array([-math.cos(x - 3.0), 1.0])

    def he(w):
        x, _, r = _shifted_sine(w)
        c, s = math.cos(x - 3.0), math.sin(x - 3.0)
        return f.hess(w) + 0.5 * np.array([[c * c + r * s, -c], [-c, 1.0]])

    return LocalObjective(ev, gr, 2, "nonconvex", None, None, he, None, "pl-sum")


# ----------------------------------------------------------------- solvers


def average_objective(objectives: Sequence[LocalObjective]) -> LocalObjective:
    objs = list(objectives)
    if not objs:
        raise ObjectiveError("no objectives")
    m = len(objs)
    ev = lambda w: sum(o.eval(w) for o in objs) / m
    gr = lambda w: sum(o.grad(w) for o in objs) / m
    he = None
    if all(o.hess is not None for o in objs):
        he = lambda w: sum(o.hess(w) for o in objs) / m
    kinds = {o.kind for o in objs}
    kind = objs[0].kind if len(kinds) == 1 else "nonconvex"
    return LocalObjective(ev, gr, objs[0].dim, kind, None, None, he, None, "average")


def _numeric_hessian(grad, w, eps=1e-5):
    d = len(w)
    H = np.empty((d, d))
    for i in range(d):
        e = np.zeros(d)
        e[i] = eps
        H[:, i] = (grad(w + e) - grad(w - e)) / (2 * eps)
    return 0.5 * (H + H.T)


def centralized_solve(objectives: Sequence[LocalObjective], method: str = "auto", x0=None, tol: float = 1e-10):
    """Minimizer and value of the average objective.

    Quadratics use the first-order condition directly.  Anything else runs
    L-BFGS followed by Newton polishing until ``||grad|| < tol``.
    """
    objs = list(objectives)
    if method == "auto":
        method = "closed-form" if all(o.name == "quadratic" for o in objs) else "newton"
    F = average_objective(objs)
    if method == "closed-form":
        w = np.mean([o.minimizer for o in objs], axis=0)
        return w, F.eval(w)
    w = np.zeros(F.dim) if x0 is None else np.asarray(x0, dtype=float).copy()
    res = minimize(F.eval, w, jac=F.grad, method="L-BFGS-B", options={"gtol": 1e-12, "maxiter": 10_000})
    w = res.x
    for _ in range(100):
        g = F.grad(w)
        if np.linalg.norm(g) < tol:
            break
        H = F.hess(w) if F.hess is not None else _numeric_hessian(F.grad, w)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, g, rcond=None)[0]
        t = 1.0
        f0 = F.eval(w)
        while t > 1e-12 and F.eval(w - t * step) > f0 + 1e-14 * abs(f0):
            t *= 0.5
        w = w - t * step
    return w, F.eval(w)


def finite_diff_check(obj: LocalObjective, points, eps: float = 1e-6) -> float:
    """Largest relative error between ``obj.grad`` and central differences."""
    if not eps > 0:
        raise ObjectiveError("eps must be positive")
    worst = 0.0
    for p in np.atleast_2d(np.asarray(points, dtype=float)):
        g = obj.grad(p)
        for i in range(len(p)):
            e = np.zeros_like(p)
            e[i] = eps
            fd = (obj.eval(p + e) - obj.eval(p - e)) / (2 * eps)
            err = abs(fd - g[i]) / max(abs(g[i]), abs(fd), 1e-8)
            worst = max(worst, err)
    return worst


# ------------------------------------------------------------ grid oracles


def _grid(box, n):
    lo, hi = box
    xs = np.linspace(lo, hi, n)
    return [np.array([x, y]) for x in xs for y in xs]


def pl_constant_estimate(obj: LocalObjective, fstar: float, box=(-2.0, 6.0), n: int = 201, min_gap: float = 1e-8):
    """Smallest ratio ||grad f||^2 / (2 (f - f*)) over a grid, skipping points at the minimum."""
    best = math.inf
    for p in _grid(box, n):
        gap = obj.eval(p) - fstar
        if gap > min_gap:
            g = obj.grad(p)
            best = min(best, float(g @ g) / (2 * gap))
    return best


def smoothness_estimate(obj: LocalObjective, box=(-2.0, 6.0), n: int = 201) -> float:
    """Largest Hessian spectral norm over a grid on ``box``."""
    if obj.hess is None:
        raise ObjectiveError("objective has no Hessian")
    return max(float(np.abs(np.linalg.eigvalsh(obj.hess(p))).max()) for p in _grid(box, n))


@dataclass
class CriticalPoint:
    point: np.ndarray
    value: float
    gradnorm: float
    hess_eigs: np.ndarray = field(repr=False)


def find_critical_points(obj: LocalObjective, box=(-2.0, 6.0), n: int = 161, tol: float = 1e-12) -> list[CriticalPoint]:
    """Newton-refine the local minima of ||grad||^2 on a grid and deduplicate."""
    lo, hi = box
    xs = np.linspace(lo, hi, n)
    G = np.array([[float(np.sum(obj.grad(np.array([x, y])) ** 2)) for y in xs] for x in xs])
    seeds = []
    for i in range(1, n - 1):
        for j in range(1, n - 1):
            if G[i, j] <= G[i - 1 : i + 2, j - 1 : j + 2].min():
                seeds.append(np.array([xs[i], xs[j]]))
    found: list[CriticalPoint] = []
    for w in seeds:
        for _ in range(50):
            g = obj.grad(w)
            if np.linalg.norm(g) < tol:
                break
            H = obj.hess(w) if obj.hess is not None else _numeric_hessian(obj.grad, w)
            try:
                w = w - np.linalg.solve(H, g)
            except np.linalg.LinAlgError:
                break
        gn = float(np.linalg.norm(obj.grad(w)))
        if not np.all(np.isfinite(w)) or gn > 1e-6:
            continue
        if any(np.linalg.norm(w - c.point) < 1e-6 for c in found):
            continue
        H = obj.hess(w) if obj.hess is not None else _numeric_hessian(obj.grad, w)
        found.append(CriticalPoint(w, obj.eval(w), gn, np.linalg.eigvalsh(H)))
    return found


@dataclass
class PLCertificate:
    point: np.ndarray
    gradnorm: float
    value_gap: float
    global_min: float
    mu_threshold: float


def find_pl_violation(obj: LocalObjective, box=(-2.0, 6.0), n: int = 161) -> PLCertificate:
    """Near-stationary point with the largest value gap above the best critical value.

    Any mu above ``mu_threshold = gradnorm^2 / (2 gap)`` violates the PL inequality there.
    """
    pts = find_critical_points(obj, box, n)
    if not pts:
        raise ObjectiveError("no critical points found")
    fmin = min(c.value for c in pts)
    worst = max(pts, key=lambda c: c.value - fmin)
    gap = worst.value - fmin
    thr = worst.gradnorm**2 / (2 * gap) if gap > 0 else math.inf
    return PLCertificate(worst.point, worst.gradnorm, gap, fmin, thr)
