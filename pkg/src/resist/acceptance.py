"""The acceptance battery: twelve numbered checks, each returning a structured result."""

from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import kernels
from .attack import AttackPlan, AttackStrategy, map_byzantine, select_links, static_plan, corrupt_link
from .config import parse_config
from .graph import DirectedGraph, complete_graph, count_tau, generate_erdos_renyi, require_degree
from .harness import run_suite
from .metrics import metrics_from_trajectory
from .mixing_analysis import beta, fit_log_slope, verify_geometric_mixing
from .objectives import (
    add_intercept,
    centralized_solve,
    find_pl_violation,
    gaussian_blobs,
    make_logistic_l2,
    make_pl_sine,
    make_pl_sum_counterexample,
    make_quadratic,
    partition_data,
    pl_constant_estimate,
    smoothness_estimate,
    find_critical_points,
)
from .rng import substream
from .runner import RunConfig, StepSchedule, run_consensus, run_dgd_multistep, run_resist
from .screening import build_mixing_row_oracle, cwtm


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    values: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"AC{self.number:<2d} {tag}  {self.name}: {self.detail}  ({self.seconds:.1f}s)"


def _attack(B: int, seed: int, R: float = 100.0) -> AttackPlan:
    return AttackPlan("dynamic-random", AttackStrategy("random-value", R), B, seed)


# 1 -------------------------------------------------------------------------


def _random_instance(rng: np.random.Generator, seed: int):
    M = int(rng.integers(5, 11))
    b = int(rng.integers(1, 3))
    if M < 2 * b + 2:
        b = 1
    g = generate_erdos_renyi(M, float(rng.uniform(0.6, 1.0)), seed)
    try:
        require_degree(g, b)
    except ValueError:
        g = complete_graph(M)
    d = int(rng.integers(1, 4))
    W = rng.normal(0.0, 1.0, size=(M, d))
    cap = sum(min(b, n) for n in g.in_degrees())
    B = int(rng.integers(0, min(cap, M * b) + 1))
    kind = ["random-value", "random-value", "sign-flip", "constant"][int(rng.integers(0, 4))]
    R = float(rng.choice([1.0, 100.0]))
    strat = AttackStrategy(kind, R, tuple(rng.normal(0.0, 1.0, size=d)) if kind == "constant" else None)
    return g, b, W, AttackPlan("dynamic-random", strat, B, seed)


def ac1_mixing_equivalence(rounds: int = 1000, seed: int = 1) -> CriterionResult:
    rng = substream(seed, "ac1")
    worst_eq = worst_sum = 0.0
    zero_ok = count_ok = oracle_ok = True
    q_pos = 0
    for r in range(rounds):
        g, b, W, plan = _random_instance(rng, seed * 100_003 + r)
        M, d = W.shape
        links = select_links(plan, g, b, r)
        bad = {j: links.incoming(j) for j in range(M)}
        received = []
        for j in range(M):
            received.append([(i, corrupt_link(plan, r, i, j, W[i]) if i in bad[j] else W[i]) for i in g.in_neighbors(j)])
        indptr = np.concatenate([[0], np.cumsum(g.in_degrees())]).astype(np.int64)
        indices = np.array([i for j in range(M) for i, _ in received[j]], dtype=np.int64)
        rec = np.array([v for j in range(M) for _, v in received[j]], dtype=float).reshape(-1, d)
        comp = np.array([1 if i in bad[j] else 0 for j in range(M) for i, _ in received[j]], dtype=np.uint8)
        Y, Q = kernels.mixing_round(W, indptr, indices, rec, comp, b)
        q_pos += int((Q > 0).sum())
        out = np.array([cwtm(W[j], received[j], b) for j in range(M)])
        bta = beta(M, b)
        for k in range(d):
            worst_eq = max(worst_eq, float(np.abs(Y[k] @ W[:, k] - out[:, k]).max()))
            worst_sum = max(worst_sum, float(np.abs(Y[k].sum(axis=1) - 1.0).max()))
            for j in range(M):
                row = Y[k, j]
                if any(row[i] != 0.0 for i in bad[j]) or row.min() < 0.0:
                    zero_ok = False
                honest_in = len(g.in_neighbors(j)) - len(bad[j])
                if int((row >= bta).sum()) < honest_in - b + 1:
                    count_ok = False
                orow = build_mixing_row_oracle(j, k, W[j], received[j], bad[j], b, M).weights
                if np.abs(orow - row).max() > 1e-12:
                    oracle_ok = False
    passed = worst_eq < 1e-10 and worst_sum <= 1e-12 and zero_ok and count_ok and oracle_ok
    detail = (
        f"max|YW-cwtm|={worst_eq:.2e}, max|rowsum-1|={worst_sum:.2e}, zero-weight={zero_ok}, "
        f"beta-count={count_ok}, kernel==oracle={oracle_ok}, q>0 rows={q_pos}"
    )
    return CriterionResult(1, "mixing-matrix equivalence", passed, detail,
                           {"eq": worst_eq, "rowsum": worst_sum, "q_pos": q_pos})


# 2 -------------------------------------------------------------------------


def golden_fixture():
    """Five nodes A..E = 0..4, b = 1; every pair linked except E -> B.

    Links A-B and C-E are compromised in both directions.  First-coordinate
    values: C = 3, D = 2, E = 5, the forged value on B -> A is 3 and the one on
    A -> B is 7.
    """
    M = 5
    edges = [(i, j) for i in range(M) for j in range(M) if i != j and (i, j) != (4, 1)]
    g = DirectedGraph.from_edges(M, edges)
    vals = {0: 4.0, 1: 1.0, 2: 3.0, 3: 2.0, 4: 5.0}
    forged = {(1, 0): 3.0, (0, 1): 7.0, (2, 4): 0.0, (4, 2): 0.0}
    compromised = set(forged)
    received = {}
    for j in range(M):
        received[j] = [(i, np.array([forged.get((i, j), vals[i])])) for i in g.in_neighbors(j)]
    return g, vals, received, compromised


def ac2_golden() -> CriterionResult:
    g, vals, received, compromised = golden_fixture()
    rows = {}
    for j in (0, 1):
        bad = {i for (i, k) in compromised if k == j}
        rows[j] = build_mixing_row_oracle(j, 0, np.array([vals[j]]), received[j], bad, 1, 5).weights
    want_a = np.array([1 / 3, 0, 1 / 6, 1 / 3, 1 / 6])
    want_b = np.array([0, 1 / 2, 1 / 2, 0, 0])
    ea = float(np.abs(rows[0] - want_a).max())
    eb = float(np.abs(rows[1] - want_b).max())
    passed = ea < 1e-12 and eb < 1e-12
    detail = f"row A={np.round(rows[0], 6).tolist()} err={ea:.1e}; row B={np.round(rows[1], 6).tolist()} err={eb:.1e}"
    return CriterionResult(2, "worked-example golden rows", passed, detail, {"err_a": ea, "err_b": eb})


# 3 -------------------------------------------------------------------------


def ac3_geometric_mixing(seed: int = 3, rounds: int = 200) -> CriterionResult:
    g = complete_graph(5)
    cfg = RunConfig(g, b=1, attack=_attack(3, seed), J=2, T_max=2, seed=seed)
    W0 = substream(seed, "init").uniform(-1, 1, size=(5, 2))
    _, Ys = run_consensus(cfg, W0, rounds)
    bta, tau = beta(5, 1), count_tau(g, 1)
    ok = True
    parts = []
    vals = {}
    for k in range(W0.shape[1]):
        rep = verify_geometric_mixing([Y[k] for Y in Ys], bta, tau, 5)
        final = float(rep.deltas[-1])
        good = rep.monotone and final < 1e-8 and rep.slope < 0 and rep.r2 > 0.95 and rep.bound_holds
        ok &= good
        parts.append(f"k={k}: delta(200)={final:.1e} slope={rep.slope:.3f} r2={rep.r2:.3f} "
                     f"monotone={rep.monotone} bound={rep.bound_holds} fit=[0,{rep.fit_range[1]})")
        vals[k] = (final, rep.slope, rep.r2)
    return CriterionResult(3, "geometric mixing", ok, "; ".join(parts), vals)


# 4 -------------------------------------------------------------------------


def ac4_exact_convergence(seed: int = 4, h: float = 0.05, S: int = 500) -> CriterionResult:
    M, J = 10, 11
    target = substream(seed, "targets").normal(0.0, 1.0, size=2)
    objs = make_quadratic(np.tile(target, (M, 1)))
    wstar, fstar = centralized_solve(objs)
    extra = 40
    cfg = RunConfig(complete_graph(M), b=1, attack=_attack(M, seed), J=J,
                    schedule=StepSchedule("constant", h), T_max=J * (S + extra), seed=seed, record_mixing="blocks")
    traj = run_resist(cfg, objs)
    mlog = metrics_from_trajectory(traj, objs, wstar, fstar)
    idx = np.flatnonzero(mlog.s == S)
    xi6_S = float(mlog.xi6[idx[0]]) if len(idx) else math.inf
    sel = (mlog.xi6 > 1e-10) & (mlog.s <= S)
    slope, r2 = fit_log_slope(mlog.xi6[sel], mlog.s[sel])
    ref = math.log(1 - objs[0].mu * h)
    rel = abs(slope - ref) / abs(ref)
    passed = xi6_S < 1e-8 and rel <= 0.25
    detail = f"xi6({S})={xi6_S:.2e}, slope={slope:.5f} vs log(1-mu h)={ref:.5f} (rel err {rel:.1e})"
    return CriterionResult(4, "exact convergence, identical locals", passed, detail,
                           {"xi6": xi6_S, "slope": slope, "ref": ref})


# 5 -------------------------------------------------------------------------


def _hetero_quadratics(seed: int, M: int, d: int = 2):
    return make_quadratic(substream(seed, "targets").normal(0.0, 1.0, size=(M, d)))


def _asym_xi1(seed: int, h: float, S: int = 600, M: int = 10, J: int = 6) -> float:
    objs = _hetero_quadratics(seed, M)
    wstar, fstar = centralized_solve(objs)
    cfg = RunConfig(complete_graph(M), b=1, attack=_attack(M // 2, seed), J=J,
                    schedule=StepSchedule("constant", h), T_max=J * S, seed=seed, record_mixing="blocks")
    mlog = metrics_from_trajectory(run_resist(cfg, objs), objs, wstar, fstar)
    tail = mlog.xi1[-max(1, len(mlog) // 5):].max(axis=1)
    return float(tail.mean())


def ac5_consensus_ball(seeds=(0, 1, 2, 3, 4), h: float = 0.1) -> CriterionResult:
    big = np.array([_asym_xi1(s, h) for s in seeds])
    small = np.array([_asym_xi1(s, h / 2) for s in seeds])
    ratio = float(big.mean() / small.mean())
    passed = 1.5 <= ratio <= 2.6
    detail = f"mean asymptotic max_k xi1: h={big.mean():.3e}, h/2={small.mean():.3e}, ratio={ratio:.3f}"
    return CriterionResult(5, "O(h) consensus ball", passed, detail, {"ratio": ratio})


# 6 -------------------------------------------------------------------------


def _er_graph(M: int, rho: float, b: int, seed: int) -> DirectedGraph:
    for k in range(1000):
        g = generate_erdos_renyi(M, rho, seed + k)
        try:
            require_degree(g, b)
            return g
        except ValueError:
            continue
    raise RuntimeError("no admissible graph found")


def ac6_resist_vs_dgd(seed: int = 6, h: float = 0.05, S: int = 300) -> CriterionResult:
    M, J = 10, 6
    g = _er_graph(M, 0.7, 1, seed)
    objs = _hetero_quadratics(seed, M)
    wstar, _ = centralized_solve(objs)
    link = g.sorted_edges()[0]
    attacked = static_plan([link], g, 1, AttackStrategy("random-value"), seed)
    clean = AttackPlan("static", AttackStrategy("none"), 0, seed)
    base = RunConfig(g, b=1, J=J, schedule=StepSchedule("constant", h), T_max=J * S, seed=seed)

    def dist(traj):
        return float(np.linalg.norm(traj.final_W - wstar[None, :]))

    from dataclasses import replace

    r_clean = dist(run_resist(replace(base, attack=clean), objs))
    r_att = dist(run_resist(replace(base, attack=attacked), objs))
    d_clean = dist(run_dgd_multistep(replace(base, attack=clean), objs))
    d_att = dist(run_dgd_multistep(replace(base, attack=attacked), objs))
    passed = d_att > 10 * d_clean and r_att <= 3 * r_clean
    detail = (f"attacked link {link}; DGD {d_clean:.3e} -> {d_att:.3e} (x{d_att / d_clean:.1f}); "
              f"RESIST {r_clean:.3e} -> {r_att:.3e} (x{r_att / r_clean:.2f})")
    return CriterionResult(6, "RESIST vs DGD under attack", passed, detail,
                           {"dgd_ratio": d_att / d_clean, "resist_ratio": r_att / r_clean})


# 7 -------------------------------------------------------------------------


def ac7_byzantine_mapping(seeds=(0, 1, 2), rounds: int = 300) -> CriterionResult:
    M, J, u = 6, 3, 0
    g = complete_graph(M)
    worst = 0.0
    for seed in seeds:
        objs = _hetero_quadratics(seed, M)
        common = dict(b=1, J=J, schedule=StepSchedule("constant", 0.1), T_max=rounds, seed=seed, t_stride=1)
        byz = RunConfig(g, attack=AttackPlan("static", AttackStrategy("random-value"), 0, seed),
                        byzantine=frozenset({u}), **common)
        mitm = RunConfig(g, attack=map_byzantine({u}, g, 1, AttackStrategy("random-value"), seed), **common)
        ta, tb = run_resist(byz, objs), run_resist(mitm, objs)
        regular = [j for j in range(M) if j != u]
        for t in ta.W_t:
            worst = max(worst, float(np.abs(ta.W_t[t][regular] - tb.W_t[t][regular]).max()))
    passed = worst <= 1e-12
    return CriterionResult(7, "Byzantine to MITM mapping", passed,
                           f"max regular-node discrepancy over {rounds} rounds x {len(seeds)} seeds = {worst:.1e}",
                           {"worst": worst})


# 8 -------------------------------------------------------------------------


def ac8_pl_rate(seed: int = 8, h: float = 0.1, S: int = 150) -> CriterionResult:
    M, J = 5, 6
    f = make_pl_sine()
    objs = [f] * M
    cfg = RunConfig(complete_graph(M), b=1, attack=_attack(3, seed), J=J,
                    schedule=StepSchedule("constant", h), T_max=J * S, seed=seed, record_mixing="blocks")
    traj = run_resist(cfg, objs)
    mlog = metrics_from_trajectory(traj, objs, np.zeros(2), 0.0)
    lo = traj.W_s.reshape(-1, 2).min(axis=0)
    hi = traj.W_s.reshape(-1, 2).max(axis=0)
    box = (float(min(lo)), float(max(hi)))
    mu_hat = pl_constant_estimate(f, 0.0, box=box, n=201)
    L_hat = smoothness_estimate(f, box=box, n=201)
    ref = math.log(1 - mu_hat * h * (2 - L_hat * h))
    sel = mlog.fgap > 1e-13
    slope, r2 = fit_log_slope(mlog.fgap[sel], mlog.s[sel])
    final = float(mlog.fgap[-1])
    passed = final < 1e-6 and slope <= 0.75 * ref
    detail = (f"fgap(final)={final:.1e}, slope={slope:.4f}, bound log(1-mu h(2-Lh))={ref:.4f} "
              f"(mu^={mu_hat:.4f}, L^={L_hat:.3f}, slack limit {0.75 * ref:.4f}), r2={r2:.3f}")
    return CriterionResult(8, "PL geometric gap decay", passed, detail,
                           {"slope": slope, "ref": ref, "mu": mu_hat, "L": L_hat, "final": final})


# 9 -------------------------------------------------------------------------


def ac9_nonconvex_rate(seed: int = 9, eps: float = 0.1, S: int = 400) -> CriterionResult:
    M, J = 5, 6
    o = make_pl_sum_counterexample()
    objs = [o] * M
    L = smoothness_estimate(o)
    p = 1.0 / (2 * L)
    fstar = min(c.value for c in find_critical_points(o))
    cfg = RunConfig(complete_graph(M), b=1, attack=_attack(3, seed), J=J,
                    schedule=StepSchedule("diminishing", p=p, omega=0.5 + eps),
                    T_max=J * (S + 20), seed=seed, record_mixing="blocks")
    mlog = metrics_from_trajectory(run_resist(cfg, objs), objs, np.zeros(2), fstar)
    at = {int(s): float(v) for s, v in zip(mlog.s, mlog.min_gradnorm2)}
    ratio = at[S] / at[100]
    sel = (mlog.s >= 1) & (mlog.s <= S)
    expo, r2 = fit_log_slope(mlog.min_gradnorm2[sel], np.log(mlog.s[sel]))
    target = -(0.5 - eps)
    passed = ratio <= 0.5 and abs(expo - target) <= 0.5 * abs(target)
    detail = (f"min|grad|^2: S=100 {at[100]:.3e}, S={S} {at[S]:.3e}, ratio={ratio:.3f}; "
              f"log-log exponent={expo:.3f} vs {target:.2f} (band [{1.5 * target:.2f}, {0.5 * target:.2f}]), L^={L:.3f}")
    return CriterionResult(9, "nonconvex diminishing-step rate", passed, detail,
                           {"ratio": ratio, "exponent": expo, "L": L})


# 10 ------------------------------------------------------------------------


def ac10_pl_counterexample() -> CriterionResult:
    cert = find_pl_violation(make_pl_sum_counterexample())
    passed = cert.gradnorm < 1e-3 and cert.value_gap > 0.05 and cert.mu_threshold < 1e-4
    detail = (f"point={np.round(cert.point, 6).tolist()}, |grad|={cert.gradnorm:.1e}, gap={cert.value_gap:.4f} "
              f"above min {cert.global_min:.4f}; PL fails for every mu > {cert.mu_threshold:.1e}")
    return CriterionResult(10, "PL counterexample certificate", passed, detail,
                           {"gradnorm": cert.gradnorm, "gap": cert.value_gap})


# 11 ------------------------------------------------------------------------

_POP_SEED = 11_000


def _population_minimizer(lam: float, C: int, p: int):
    X, y = gaussian_blobs(100_000, C, p, _POP_SEED)
    return centralized_solve([make_logistic_l2(add_intercept(X), y, lam, C)])[0]


def _logistic_xi6(seed: int, N: int, w_pop, lam: float, C: int, p: int, M: int = 10, J: int = 3, S: int = 200, h: float = 0.5):
    rng = substream(seed, "samples", N)
    # Same class centers as the population, fresh samples per seed and per N.
    centers = substream(_POP_SEED, "data").normal(0.0, 2.0, size=(C, p))
    y = np.arange(N * M) % C
    X = centers[y] + rng.normal(0.0, 1.0, size=(N * M, p))
    data = partition_data(add_intercept(X), y, M, "iid", seed)
    objs = [make_logistic_l2(Xj, yj, lam, C) for Xj, yj in data.parts]
    cfg = RunConfig(complete_graph(M), b=1, attack=_attack(M // 2, seed), J=J,
                    schedule=StepSchedule("constant", h), T_max=J * S, seed=seed, record_mixing="blocks")
    mlog = metrics_from_trajectory(run_resist(cfg, objs), objs, w_pop, 0.0)
    return float(mlog.xi6[-max(1, len(mlog) // 5):].mean())


def ac11_sample_size(seeds=tuple(range(10)), N: int = 50, lam: float = 0.1) -> CriterionResult:
    C, p = 3, 4
    w_pop = _population_minimizer(lam, C, p)
    a = np.array([_logistic_xi6(s, N, w_pop, lam, C, p) for s in seeds])
    b = np.array([_logistic_xi6(s, 4 * N, w_pop, lam, C, p) for s in seeds])
    ratio = float(a.mean() / b.mean())
    passed = 1.4 <= ratio <= 2.8
    detail = f"mean asymptotic xi6: N={N} {a.mean():.3e}, N={4 * N} {b.mean():.3e}, ratio={ratio:.3f}"
    return CriterionResult(11, "sample-size scaling (soft)", passed, detail, {"ratio": ratio})


# 12 ------------------------------------------------------------------------

DETERMINISM_CONFIG = """
[suite]
name = determinism
seeds = 5, 6

[run:resist]
algorithm = resist
graph = er
M = 8
rho = 0.8
b = 1
B_actual = 4
objective = quadratic
J = 4
h = 0.1
T_max = 200

[run:dgd]
algorithm = dgd
graph = er
M = 8
rho = 0.8
b = 1
B_actual = 4
objective = quadratic
J = 4
h = 0.1
T_max = 200
"""


def ac12_determinism() -> CriterionResult:
    suite = parse_config(DETERMINISM_CONFIG)
    with tempfile.TemporaryDirectory() as tmp:
        a, b = Path(tmp, "a"), Path(tmp, "b")
        codes = (run_suite(suite, a), run_suite(suite, b, parallel=2))
        files = sorted(p.name for p in a.iterdir())
        same = files == sorted(p.name for p in b.iterdir()) and all(
            (a / f).read_bytes() == (b / f).read_bytes() for f in files
        )
    passed = codes == (0, 0) and same and len(files) == 5
    return CriterionResult(12, "determinism", passed,
                           f"exit codes {codes}, {len(files)} files, byte-identical={same} (serial vs 2 workers)",
                           {"files": files})


CRITERIA: dict[int, Callable[[], CriterionResult]] = {
    1: ac1_mixing_equivalence,
    2: ac2_golden,
    3: ac3_geometric_mixing,
    4: ac4_exact_convergence,
    5: ac5_consensus_ball,
    6: ac6_resist_vs_dgd,
    7: ac7_byzantine_mapping,
    8: ac8_pl_rate,
    9: ac9_nonconvex_rate,
    10: ac10_pl_counterexample,
    11: ac11_sample_size,
    12: ac12_determinism,
}


def run_criterion(n: int) -> CriterionResult:
    t0 = time.perf_counter()
    res = CRITERIA[n]()
    res.seconds = time.perf_counter() - t0
    return res


def run_all(numbers=None) -> list[CriterionResult]:
    return [run_criterion(n) for n in (numbers or sorted(CRITERIA))]
