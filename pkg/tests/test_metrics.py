import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from resist.attack import AttackPlan, AttackStrategy
from resist.graph import complete_graph
from resist.metrics import (
    CSV_COLUMNS,
    MetricsLog,
    compute_heterogeneity,
    compute_what,
    compute_xi1,
    compute_xi5,
    compute_xi6,
    fit_geometric_rate,
    frobenius_triplet,
    frobenius_triplet_direct,
    metrics_from_trajectory,
    uniform_chat,
)
from resist.objectives import centralized_solve, make_quadratic
from resist.runner import RunConfig, run_resist

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_xi5_examples():
    assert compute_xi5(np.array([[0.0], [2.0]]), 0) == pytest.approx(math.sqrt(2))
    assert compute_xi5(np.ones((4, 2)) * 3.0, 1) == 0.0


def test_xi1_with_uniform_weights_equals_xi5():
    W = np.random.default_rng(0).normal(size=(6, 3))
    ch = uniform_chat(6, 3)
    for k in range(3):
        assert compute_xi1(W, ch, k) == pytest.approx(compute_xi5(W, k), abs=1e-14)


def test_what_and_xi6():
    W = np.array([[1.0, 10.0], [3.0, 20.0]])
    ch = np.array([[0.25, 0.75], [1.0, 0.0]])
    what = compute_what(W, ch)
    assert np.allclose(what, [2.5, 10.0])
    assert compute_xi6(what, np.array([2.5, 14.0])) == pytest.approx(4.0)


def test_heterogeneity_examples():
    objs = make_quadratic([[0.0], [2.0]])
    wstar, _ = centralized_solve(objs)
    delta, c0 = compute_heterogeneity(objs, wstar)
    assert delta == pytest.approx(2.0)
    same = make_quadratic([[1.0, 1.0]] * 3)
    w = np.array([0.3, -0.2])
    _, c0 = compute_heterogeneity(same, np.ones(2), [w], [np.array([[0.7, 0.2, 0.1], [0.0, 0.0, 1.0]])])
    assert c0 == pytest.approx(0.0, abs=1e-15)
    diff = make_quadratic(np.random.default_rng(1).normal(size=(3, 2)))
    _, c0 = compute_heterogeneity(diff, np.zeros(2), [w], [uniform_chat(3, 2)])
    assert c0 == pytest.approx(0.0, abs=1e-14)


def test_fit_geometric_rate_examples():
    s = 0.5 ** np.arange(30)
    slope, r2 = fit_geometric_rate(s)
    assert slope == pytest.approx(math.log(0.5)) and r2 == pytest.approx(1.0)
    mixed = np.concatenate([np.full(10, 7.0), 0.9 ** np.arange(40)])
    assert fit_geometric_rate(mixed, burn_in=10)[0] == pytest.approx(math.log(0.9))
    with pytest.raises(ValueError):
        fit_geometric_rate([1.0, 0.0, 1.0])


@settings(max_examples=80, deadline=None)
@given(
    arrays(float, (5, 3), elements=finite),
    arrays(float, 3, elements=finite),
    arrays(float, (3, 5), elements=st.floats(0.01, 1.0)),
)
def test_frobenius_triplet_matches_direct(W, wstar, raw):
    ch = raw / raw.sum(axis=1, keepdims=True)
    what = compute_what(W, ch)
    xi5 = np.array([compute_xi5(W, k) for k in range(3)])
    xi1 = np.array([compute_xi1(W, ch, k) for k in range(3)])
    direct = frobenius_triplet_direct(W, what, wstar)
    assert abs(frobenius_triplet(xi5, compute_xi6(what, wstar), xi1, 5) - direct) <= 1e-9 * max(1.0, direct)
    # Triangle inequality: ||W - 1 w*^T||_F is bounded by the triplet's last two terms.
    lhs = np.linalg.norm(W - wstar[None, :])
    assert lhs <= math.sqrt(5) * compute_xi6(what, wstar) + np.linalg.norm(xi1) + 1e-9 * max(1.0, lhs)


def _traj(record="blocks", byz=frozenset()):
    M = 6
    objs = make_quadratic(np.random.default_rng(4).normal(size=(M, 2)))
    plan = AttackPlan("dynamic-random", AttackStrategy("random-value", 2.0), 4 if not byz else 0, 1)
    cfg = RunConfig(complete_graph(M), b=1, attack=plan, J=4, T_max=4 * 60, seed=1,
                    record_mixing=record, byzantine=byz)
    return run_resist(cfg, objs), objs


def test_metrics_from_trajectory_blocks():
    tr, objs = _traj()
    wstar, fstar = centralized_solve(objs)
    log = metrics_from_trajectory(tr, objs, wstar, fstar)
    assert len(log) > 40 and log.s[0] == 0
    assert np.all(np.diff(log.min_gradnorm2) <= 0)
    assert np.all(log.fgap >= 0)
    r = 3
    s = log.s[r]
    assert log.xi5[r, 0] == pytest.approx(compute_xi5(tr.W_s[s], 0))
    assert log.frob_triplet[r] == pytest.approx(
        frobenius_triplet_direct(tr.W_s[s], log.what[r], wstar), rel=1e-9)


def test_metrics_uniform_fallback_and_byzantine_exclusion():
    tr, objs = _traj(record="none")
    wstar, fstar = centralized_solve(objs)
    log = metrics_from_trajectory(tr, objs, wstar, fstar)
    assert len(log) == tr.s_count + 1
    assert np.allclose(log.xi1, log.xi5)
    assert log.c0_estimate == pytest.approx(0.0, abs=1e-12)
    trb, _ = _traj(record="none", byz=frozenset({5}))
    logb = metrics_from_trajectory(trb, objs, wstar, fstar)
    s = logb.s[-1]
    assert logb.xi5[-1, 0] == pytest.approx(compute_xi5(trb.W_s[s][:5], 0))


def test_csv_round_trip(tmp_path):
    tr, objs = _traj(record="none")
    wstar, fstar = centralized_solve(objs)
    log = metrics_from_trajectory(tr, objs, wstar, fstar)
    text = log.to_csv()
    lines = text.splitlines()
    assert lines[0].split(",") == CSV_COLUMNS
    assert float(lines[1].split(",")[4]) == log.xi6[0]
    p = tmp_path / "m.csv"
    log.write_csv(p)
    with pytest.raises(FileExistsError):
        log.write_csv(p)
