import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from resist.attack import (
    AttackError,
    AttackPlan,
    AttackStrategy,
    corrupt,
    corrupt_link,
    map_byzantine,
    select_links,
    static_plan,
)
from resist.graph import DirectedGraph, complete_graph, generate_erdos_renyi
from resist.rng import derive_seed, splitmix64, substream


def test_splitmix64_reference_value():
    # First output of the reference splitmix64 generator seeded with 0.
    assert splitmix64(0) == 0xE220A8397B1DCDAF


def test_substreams_are_keyed():
    a = substream(1, "attack-value", 3, 0, 1).random(4)
    b = substream(1, "attack-value", 3, 0, 1).random(4)
    c = substream(1, "attack-value", 3, 1, 0).random(4)
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    assert derive_seed(1, "graph") != derive_seed(1, "init")


def test_strategy_validation():
    with pytest.raises(AttackError):
        AttackStrategy("explode")
    with pytest.raises(AttackError):
        AttackStrategy("constant")
    with pytest.raises(AttackError):
        AttackStrategy("constant", constant=(np.nan,))
    with pytest.raises(AttackError):
        AttackStrategy("random-value", R=np.inf)


def test_corrupt_examples():
    v = np.array([1.0, -2.0, 0.5])
    assert np.array_equal(corrupt(v, AttackStrategy("sign-flip")), [-1.0, 2.0, -0.5])
    assert np.array_equal(corrupt(v, AttackStrategy("none")), v)
    assert np.array_equal(corrupt(np.array([3.0, 4.0]), AttackStrategy("constant", constant=(9.0, 9.0))), [9.0, 9.0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=6), st.floats(1e-3, 1e3), st.integers(0, 2**32))
def test_random_value_in_range_and_finite(vals, R, seed):
    out = corrupt(np.array(vals), AttackStrategy("random-value", R), substream(seed, "x"))
    assert np.all(np.isfinite(out)) and np.all(np.abs(out) <= R)


def test_select_links_empty_when_zero():
    g = complete_graph(5)
    assert select_links(AttackPlan(B_actual=0), g, 1, 7).links == frozenset()


@settings(max_examples=60, deadline=None)
@given(st.integers(4, 9), st.integers(1, 2), st.integers(0, 400), st.integers(0, 2**32))
def test_dynamic_selection_respects_cap(M, b, t, seed):
    g = complete_graph(M)
    B = int(substream(seed, "B").integers(0, M * b + 1))
    plan = AttackPlan("dynamic-random", AttackStrategy("random-value"), B, seed)
    links = select_links(plan, g, b, t)
    assert len(links.links) == B
    assert max(links.incoming_counts(M)) <= b
    assert links.links <= g.edges
    # Honest and compromised in-neighbors partition the neighborhood.
    for j in range(M):
        bad = links.incoming(j)
        honest = set(g.in_neighbors(j)) - bad
        assert bad | honest == set(g.in_neighbors(j)) and not (bad & honest)
    assert select_links(plan, g, b, t) == links


def test_dynamic_selection_example_b1():
    g = complete_graph(5)
    plan = AttackPlan("dynamic-random", AttackStrategy("random-value"), 2, 11)
    seen = set()
    for t in range(20):
        links = select_links(plan, g, 1, t)
        assert len(links.links) == 2 and max(links.incoming_counts(5)) <= 1
        seen.add(links.links)
    assert len(seen) > 1  # the attacked set moves between rounds


def test_dynamic_selection_impossible():
    g = complete_graph(4)
    with pytest.raises(AttackError):
        select_links(AttackPlan("dynamic-random", AttackStrategy("sign-flip"), 5, 0), g, 1, 0)


def test_static_plan_cap_checked_at_construction():
    g = complete_graph(5)
    with pytest.raises(AttackError):
        static_plan([(0, 2), (1, 2)], g, 1, AttackStrategy("sign-flip"))
    with pytest.raises(AttackError):
        static_plan([(0, 0)], g, 1, AttackStrategy("sign-flip"))
    plan = static_plan([(0, 2)], g, 1, AttackStrategy("sign-flip"))
    assert all(select_links(plan, g, 1, t).links == {(0, 2)} for t in range(5))


def test_map_byzantine_examples():
    g = complete_graph(5)
    assert map_byzantine(set(), g, 1).static_links == frozenset()
    plan = map_byzantine({2}, g)
    assert plan.policy == "static" and plan.strategy.kind == "random-value"
    assert plan.static_links == {(2, j) for j in range(5) if j != 2}
    for t in range(3):
        assert select_links(plan, g, 1, t).sources() == {2}
    with pytest.raises(AttackError):
        map_byzantine({0, 1}, g, 1)


def test_map_byzantine_degree_bound():
    g = DirectedGraph.from_edges(3, [(0, 1), (1, 2), (2, 0), (1, 0), (2, 1), (0, 2)])
    with pytest.raises(AttackError):
        map_byzantine({0}, g, 2)


def test_corrupt_link_replays():
    plan = AttackPlan("dynamic-random", AttackStrategy("random-value", 5.0), 1, 42)
    a = corrupt_link(plan, 3, 0, 1, np.zeros(3))
    b = corrupt_link(plan, 3, 0, 1, np.zeros(3))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, corrupt_link(plan, 4, 0, 1, np.zeros(3)))


def test_er_graph_selection_respects_cap():
    g = generate_erdos_renyi(10, 0.7, 2)
    plan = AttackPlan("dynamic-random", AttackStrategy("random-value"), 6, 2)
    for t in range(30):
        assert max(select_links(plan, g, 1, t).incoming_counts(10)) <= 1
