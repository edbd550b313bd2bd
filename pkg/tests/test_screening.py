import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from resist.acceptance import golden_fixture
from resist.mixing_analysis import beta
from resist.screening import (
    ScreeningError,
    aggregate,
    build_mixing_matrix,
    build_mixing_row_oracle,
    bulyan,
    coordinate_median,
    cwtm,
    krum,
    trim_sets,
)


def rec(*pairs):
    return [(i, np.atleast_1d(np.asarray(v, dtype=float))) for i, v in pairs]


def trimmed_mean_oracle(self_value, values, b):
    """Scalar trimmed mean written out directly from the definition."""
    vs = sorted(values)
    kept = vs[b:len(vs) - b]
    return (self_value + sum(kept)) / (len(kept) + 1)


def test_cwtm_hand_example():
    out = cwtm(3.0, rec((0, 1), (1, 2), (2, 4), (3, 5)), 1)
    assert out[0] == pytest.approx((2 + 4 + 3) / 3)
    assert out[0] == pytest.approx(3.0)


def test_cwtm_identity_case():
    r = rec(*[(i, [2.5, -1.0]) for i in range(5)])
    assert np.allclose(cwtm(np.array([2.5, -1.0]), r, 2), [2.5, -1.0])


def test_cwtm_coordinates_independent():
    r = rec((0, [0.0, 9.0]), (1, [9.0, 0.0]), (2, [5.0, 5.0]))
    # Coordinate 0 trims nodes 0 and 1; coordinate 1 trims nodes 1 and 0 respectively.
    out = cwtm(np.array([1.0, 1.0]), r, 1)
    assert np.allclose(out, [3.0, 3.0])
    low, up, _ = trim_sets(r, 1, 0)
    assert (low, up) == ([0], [1])
    low, up, _ = trim_sets(r, 1, 1)
    assert (low, up) == ([1], [0])


def test_cwtm_rejects_large_b():
    with pytest.raises(ScreeningError):
        cwtm(0.0, rec((0, 1), (1, 2)), 2)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=3, max_size=9), st.floats(-100, 100), st.integers(0, 3))
def test_cwtm_matches_scalar_oracle(vals, self_value, b):
    assume(b < (len(vals) + 1) / 2 and len(vals) >= 2 * b)
    out = cwtm(self_value, rec(*enumerate(vals)), b)[0]
    assert out == pytest.approx(trimmed_mean_oracle(self_value, vals, b), abs=1e-9)


def test_trim_ties_smallest_id_and_seeded_random():
    r = rec((3, 1.0), (1, 1.0), (2, 1.0), (0, 1.0))
    low, up, center = trim_sets(r, 1, 0)
    assert low == [0] and up == [3] and center == [1, 2]
    seen = {tuple(trim_sets(r, 1, 0, np.random.default_rng(s))[0]) for s in range(30)}
    assert len(seen) > 1


def test_median_examples():
    assert coordinate_median(1.0, rec((0, 2), (1, 3)))[0] == 2
    assert coordinate_median(1.0, rec((0, 2), (1, 3), (2, 10)))[0] == 2.5
    assert coordinate_median(4.0, rec((0, 4), (1, 4)))[0] == 4


def test_krum_bulyan_equal_inputs():
    v = np.array([1.0, 2.0])
    r = rec(*[(i, v) for i in range(8)])
    assert np.array_equal(krum(v, r, 1), v)
    assert np.allclose(bulyan(v, r, 1), v)


def krum_oracle(cands, b):
    n = len(cands)
    m = n - b - 2
    best, best_score = None, np.inf
    for i, x in enumerate(cands):
        d = sorted(float(np.sum((x - y) ** 2)) for k, y in enumerate(cands) if k != i)
        score = sum(d[:m])
        if score < best_score:
            best, best_score = i, score
    return best


def test_krum_avoids_outlier():
    rng = np.random.default_rng(0)
    pts = rng.normal(0, 0.1, size=(5, 2))
    outlier = np.array([50.0, -50.0])
    r = rec(*[(i, p) for i, p in enumerate(pts)], (9, outlier))
    out = krum(np.array([0.0, 0.0]), r, 1)
    assert np.linalg.norm(out - outlier) > 10
    cands = [np.zeros(2)] + [p for p in pts] + [outlier]
    assert np.array_equal(out, cands[krum_oracle(cands, 1)])


def test_candidate_preconditions():
    with pytest.raises(ScreeningError):
        krum(0.0, rec((0, 1), (1, 2), (2, 3)), 1)
    with pytest.raises(ScreeningError):
        bulyan(0.0, rec(*[(i, i) for i in range(5)]), 1)  # 6 = 4b+2 candidates
    bulyan(0.0, rec(*[(i, i) for i in range(6)]), 1)


def test_aggregate_dispatch():
    r = rec((0, 1.0), (1, 2.0), (2, 3.0))
    assert aggregate("mean", 2.0, r, 1)[0] == 2.0
    with pytest.raises(ScreeningError):
        aggregate("nope", 0.0, r, 1)


def test_golden_rows():
    g, vals, received, compromised = golden_fixture()
    bad_a = {i for (i, k) in compromised if k == 0}
    row_a = build_mixing_row_oracle(0, 0, np.array([vals[0]]), received[0], bad_a, 1, 5)
    assert np.allclose(row_a.weights, [1 / 3, 0, 1 / 6, 1 / 3, 1 / 6], atol=1e-12)
    assert row_a.q == 1 and row_a.lower == [3] and row_a.upper == [4]
    bad_b = {i for (i, k) in compromised if k == 1}
    row_b = build_mixing_row_oracle(1, 0, np.array([vals[1]]), received[1], bad_b, 1, 5)
    assert np.allclose(row_b.weights, [0, 1 / 2, 1 / 2, 0, 0], atol=1e-12)
    # The rows reproduce what node A and node B actually compute.
    for j, row in ((0, row_a), (1, row_b)):
        truth = np.array([vals[i] for i in range(5)])
        assert row.weights @ truth == pytest.approx(cwtm(vals[j], received[j], 1)[0], abs=1e-12)


def test_q_zero_uniform():
    r = rec((0, 1.0), (1, 2.0), (2, 3.0), (3, 4.0))
    # The single compromised link (from node 3) lands in the trimmed upper set.
    row = build_mixing_row_oracle(4, 0, 2.5, r, {3}, 1, 5)
    assert row.q == 0
    assert np.allclose(row.weights, [0, 1 / 3, 1 / 3, 0, 1 / 3])
    # With every link honest the trimmed honest values must stand in: q = b.
    assert build_mixing_row_oracle(4, 0, 2.5, r, set(), 1, 5).q == 1


def random_round(rng, M, b, d):
    W = rng.normal(size=(M, d))
    received, bad = [], []
    for j in range(M):
        nbrs = [i for i in range(M) if i != j]
        k = int(rng.integers(0, b + 1))
        cj = set(rng.choice(nbrs, size=k, replace=False).tolist())
        scale = rng.choice([0.5, 100.0])
        received.append([(i, rng.uniform(-scale, scale, d) if i in cj else W[i]) for i in nbrs])
        bad.append(cj)
    return W, received, bad


@settings(max_examples=80, deadline=None)
@given(st.integers(5, 9), st.integers(1, 2), st.integers(1, 3), st.integers(0, 2**32))
def test_mixing_matrix_properties(M, b, d, seed):
    assume(M - 1 >= 2 * b + 1)
    rng = np.random.default_rng(seed)
    W, received, bad = random_round(rng, M, b, d)
    out = np.array([cwtm(W[j], received[j], b) for j in range(M)])
    for k in range(d):
        Y = build_mixing_matrix(W, received, bad, b, k)
        assert np.abs(Y @ W[:, k] - out[:, k]).max() < 1e-10
        assert np.abs(Y.sum(axis=1) - 1).max() <= 1e-12
        assert Y.min() >= 0
        for j in range(M):
            assert all(Y[j, i] == 0.0 for i in bad[j])
            assert Y[j, j] == pytest.approx(1 / (M - 1 - 2 * b + 1))
            honest = M - 1 - len(bad[j])
            assert (Y[j] >= beta(M, b)).sum() >= honest - b + 1
            # Convex-combination property over honest values and self.
            hv = [W[i, k] for i in range(M) if i != j and i not in bad[j]] + [W[j, k]]
            assert min(hv) - 1e-12 <= out[j, k] <= max(hv) + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(5, 8), st.integers(0, 2**32))
def test_cwtm_permutation_equivariant(M, seed):
    rng = np.random.default_rng(seed)
    W, received, _ = random_round(rng, M, 1, 2)
    perm = rng.permutation(M)
    for j in range(M):
        base = cwtm(W[j], received[j], 1)
        relabeled = [(int(perm[i]), v) for i, v in received[j]]
        assert np.allclose(cwtm(W[j], relabeled, 1), base)


def test_oracle_rejects_too_many_compromised():
    with pytest.raises(ScreeningError):
        build_mixing_row_oracle(0, 0, 0.0, rec((1, 0), (2, 0), (3, 0)), {1, 2}, 1, 4)
