import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from piecelab import _kernels as K

pytestmark = pytest.mark.skipif(not K.HAVE_NUMBA, reason="numba not installed")


def _nodes(rng, n=20, lo=-1.0, hi=1.0):
    return np.sort(rng.uniform(lo, hi, n)), rng.uniform(0.0, 0.2, n)


@given(st.integers(0, 2**31), st.floats(0.5, 6.0))
def test_same_table_agrees(seed, length):
    us, ws = _nodes(np.random.default_rng(seed))
    a = K.same_table_np(length, us, ws, 14)
    b = K.same_table_nb(length, us, ws, 14)
    np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-13)


@given(st.integers(0, 2**31), st.floats(0.5, 5.0), st.floats(0.5, 5.0), st.floats(0.0, 1.5))
def test_pair_table_agrees(seed, l1, l2, d):
    us, ws = _nodes(np.random.default_rng(seed))
    a = K.pair_table_np(l1, l2, d, us, ws, 10, 12)
    b = K.pair_table_nb(l1, l2, d, us, ws, 10, 12)
    np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-13)


@given(st.integers(0, 2**31), st.integers(2, 9))
def test_assemble_same_agrees(seed, n):
    X = np.random.default_rng(seed).normal(size=(2 * n + 1, 2 * n + 1))
    C = X + X.T  # same-piece tables are symmetric, which the numba assembly relies on
    np.testing.assert_allclose(K.assemble_same_np(C, n, 2.5), K.assemble_same_nb(C, n, 2.5),
                               rtol=1e-12, atol=1e-14)


@given(st.integers(0, 2**31), st.integers(1, 7), st.integers(1, 7))
def test_assemble_pair_agrees(seed, n1, n2):
    C = np.random.default_rng(seed).normal(size=(2 * n1 + 1, 2 * n2 + 1))
    np.testing.assert_allclose(K.assemble_pair_np(C, n1, n2, 1.5, 2.5), K.assemble_pair_nb(C, n1, n2, 1.5, 2.5),
                               rtol=1e-12, atol=1e-14)


@given(st.integers(0, 2**31), st.integers(0, 30), st.sampled_from([0.0, 0.3, 1.0]))
def test_chain_breaks_agrees(seed, n, reach):
    rng = np.random.default_rng(seed)
    ls = rng.exponential(size=n)
    rights = np.cumsum(ls)
    lefts = rights - ls
    long_idx = np.flatnonzero(ls > 0.8).astype(np.int64)
    a = K.chain_breaks_np(lefts, rights, long_idx, reach)
    b = K.chain_breaks_nb(lefts, rights, long_idx, reach)
    assert a.dtype == b.dtype == np.bool_
    np.testing.assert_array_equal(a, b)


@given(st.integers(0, 2**31), st.integers(0, 40), st.integers(1, 3))
def test_pattern_count_agrees(seed, n, r):
    rng = np.random.default_rng(seed)
    lengths = rng.exponential(size=n)
    gaps = rng.exponential(size=max(n - 1, 0))
    lo = rng.uniform(0, 1, r)
    hi = lo + rng.uniform(0, 2, r)
    glo = rng.uniform(0, 0.5, max(r - 1, 0))
    ghi = glo + 1.0
    a = K.pattern_count_np(lengths, gaps, lo, hi, glo, ghi)
    b = K.pattern_count_nb(lengths, gaps, lo, hi, glo, ghi)
    assert a == b


def test_pattern_count_brute_force():
    rng = np.random.default_rng(5)
    lengths = rng.exponential(size=200)
    gaps = lengths[1:] * 0.0
    lo, hi = np.array([0.5, 0.0]), np.array([2.0, 0.5])
    want = sum(lo[0] <= lengths[i] <= hi[0] and lo[1] <= lengths[i + 1] <= hi[1] for i in range(199))
    assert K.pattern_count(lengths, gaps, lo, hi, np.zeros(1), np.ones(1)) == want


def test_env_flag_selects_numpy_path():
    code = "from piecelab import _kernels as K; print(K.USE_NUMBA, K.same_table is K.same_table_np)"
    env = dict(os.environ, PIECELAB_NO_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True, env=env)
    assert out.stdout.split() == ["False", "True"]
    env["PIECELAB_NO_NUMBA"] = "0"
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True, env=env)
    assert out.stdout.split() == ["True", "False"]
