import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from resist import kernels
from resist.kernels import _fallback
from resist.screening import build_mixing_row_oracle, cwtm

try:
    from resist.kernels import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = [_fallback] + ([_ckernels] if _ckernels is not None else [])


def make_round(seed, M, b, d):
    rng = np.random.default_rng(seed)
    W = rng.normal(size=(M, d))
    indptr = [0]
    indices, received, comp = [], [], []
    for j in range(M):
        nbrs = [i for i in range(M) if i != j]
        bad = set(rng.choice(nbrs, size=int(rng.integers(0, b + 1)), replace=False).tolist())
        for i in nbrs:
            indices.append(i)
            if i in bad:
                received.append(rng.choice([-1, 1]) * rng.uniform(0, rng.choice([0.5, 50.0]), d))
            else:
                received.append(W[i])
            comp.append(1 if i in bad else 0)
        indptr.append(len(indices))
    return (
        W,
        np.array(indptr, dtype=np.int64),
        np.array(indices, dtype=np.int64),
        np.ascontiguousarray(received, dtype=float),
        np.array(comp, dtype=np.uint8),
    )


def test_backend_selected():
    assert kernels.BACKEND in ("cython", "python")


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
@settings(max_examples=60, deadline=None)
@given(st.integers(5, 10), st.integers(1, 2), st.integers(1, 4), st.integers(0, 2**32))
def test_kernel_matches_reference(impl, M, b, d, seed):
    W, indptr, indices, received, comp = make_round(seed, M, b, d)
    out = impl.cwtm_round(W, indptr, indices, received, b)
    Y, Q = impl.mixing_round(W, indptr, indices, received, comp, b)
    for j in range(M):
        lo, hi = indptr[j], indptr[j + 1]
        rec = list(zip(indices[lo:hi].tolist(), received[lo:hi]))
        assert np.allclose(out[j], cwtm(W[j], rec, b), atol=1e-13)
        bad = {int(i) for i, c in zip(indices[lo:hi], comp[lo:hi]) if c}
        for k in range(d):
            row = build_mixing_row_oracle(j, k, W[j], rec, bad, b, M)
            assert np.abs(row.weights - Y[k, j]).max() < 1e-13
            assert Q[j, k] == row.q
    for k in range(d):
        assert np.abs(Y[k] @ W[:, k] - out[:, k]).max() < 1e-10


@pytest.mark.skipif(_ckernels is None, reason="compiled extension not built")
def test_backends_agree_bitwise_on_cwtm():
    for seed in range(50):
        args = make_round(seed, 8, 2, 3)
        a = _fallback.cwtm_round(*args[:4], 2)
        c = _ckernels.cwtm_round(*args[:4], 2)
        assert np.abs(a - c).max() <= 4 * np.finfo(float).eps * max(1.0, np.abs(a).max())


def test_env_var_forces_fallback():
    env = dict(os.environ, RESIST_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "import resist.kernels as k; print(k.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"
