import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cascadesc import omp
from cascadesc.omp import (
    Both,
    Budget,
    SparseCode,
    StopRule,
    Tolerance,
    encode_batch,
    omp_encode,
    omp_encode_masked,
    reconstruct,
    reconstruct_column,
)
from oracles import random_dictionary, reference_omp

BACKENDS = sorted(omp._KERNELS)


@pytest.mark.parametrize("backend", BACKENDS)
def test_matches_reference(rng, backend):
    for _ in range(200):
        n, m = rng.integers(2, 9), rng.integers(2, 13)
        T = int(rng.integers(1, 4))
        D = random_dictionary(rng, n, m)
        y = rng.standard_normal(n) * 10
        support, coefs = omp_encode(D, y, Budget(T), backend=backend)
        ref_s, ref_c = reference_omp(D, y, T)
        assert list(support) == ref_s
        np.testing.assert_allclose(coefs, ref_c, atol=1e-9)


def test_exact_sparse_signal_recovered(rng):
    D = random_dictionary(rng, 16, 32)
    y = 3.0 * D[:, 5] - 2.0 * D[:, 17]
    support, coefs = omp_encode(D, y, Budget(4))
    assert sorted(support) == [5, 17]
    np.testing.assert_allclose(reconstruct_column(D, support, coefs), y, atol=1e-10)


def test_lowest_index_wins_ties():
    D = np.eye(4)
    support, _ = omp_encode(D, np.array([1.0, 1.0, 1.0, 0.0]), Budget(1))
    assert list(support) == [0]


def test_zero_signal_gives_empty_support():
    support, coefs = omp_encode(np.eye(3), np.zeros(3), Budget(2))
    assert len(support) == 0 and len(coefs) == 0


def test_tolerance_stop(rng):
    D = random_dictionary(rng, 8, 20)
    y = rng.standard_normal(8) * 5
    eps2 = 0.3 * float(y @ y)
    support, coefs = omp_encode(D, y, Tolerance(eps2))
    r = y - reconstruct_column(D, support, coefs)
    assert r @ r <= eps2
    if len(support) > 1:
        s2, c2 = omp_encode(D, y, Budget(len(support) - 1))
        r2 = y - reconstruct_column(D, s2, c2)
        assert r2 @ r2 > eps2


def test_both_stops_at_first_trigger(rng):
    D = random_dictionary(rng, 8, 20)
    y = rng.standard_normal(8)
    assert len(omp_encode(D, y, Both(2, 0.0))[0]) == 2
    assert len(omp_encode(D, y, Both(8, float(y @ y) * 2))[0]) == 0


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**20), n=st.integers(2, 12), m=st.integers(2, 24),
       T=st.integers(1, 6))
def test_residual_orthogonal_to_support(seed, n, m, T):
    rng = np.random.default_rng(seed)
    D = random_dictionary(rng, n, m)
    y = rng.standard_normal(n)
    support, coefs = omp_encode(D, y, Budget(T))
    assert len(support) <= min(T, n)
    assert len(set(support.tolist())) == len(support)
    r = y - reconstruct_column(D, support, coefs)
    if len(support):
        np.testing.assert_allclose(D[:, support].T @ r, 0, atol=1e-8 * (1 + np.linalg.norm(y)))


@pytest.mark.parametrize("backend", BACKENDS)
def test_masked_matches_reference(rng, backend):
    for _ in range(150):
        n, m = 16, int(rng.integers(8, 40))
        D = random_dictionary(rng, n, m)
        y = rng.standard_normal(n) * 10
        mask = (rng.random(n) < 0.6).astype(float)
        T = int(rng.integers(1, 5))
        out = omp_encode_masked(D, y, mask, Budget(T), backend=backend)
        if mask.sum() < omp.MIN_KNOWN:
            assert out is None
            continue
        ref_s, ref_c = reference_omp(D, y, T, mask=mask if mask.sum() < n else None)
        assert list(out[0]) == ref_s
        np.testing.assert_allclose(out[1], ref_c, atol=1e-8)


def test_masked_ignores_unknown_values(rng):
    D = random_dictionary(rng, 16, 30)
    y = rng.standard_normal(16)
    mask = np.r_[np.ones(10), np.zeros(6)]
    a = omp_encode_masked(D, y, mask, Budget(3))
    y2 = y.copy()
    y2[10:] = 1e6
    b = omp_encode_masked(D, y2, mask, Budget(3))
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_allclose(a[1], b[1])


def test_masked_full_mask_equals_unmasked(rng):
    D = random_dictionary(rng, 16, 30)
    y = rng.standard_normal(16)
    a = omp_encode_masked(D, y, np.ones(16), Budget(3))
    b = omp_encode(D, y, Budget(3))
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_masked_skips_sparse_columns(rng):
    D = random_dictionary(rng, 16, 30)
    Y = rng.standard_normal((16, 3))
    M = np.ones((16, 3))
    M[:13, 1] = 0  # three known
    code = encode_batch(D, Y, Budget(3), mask=M)
    assert list(code.skipped) == [False, True, False]
    assert code.counts[1] == 0


def test_masked_support_capped_by_known_count(rng):
    D = random_dictionary(rng, 16, 64)
    y = rng.standard_normal(16)
    mask = np.zeros(16)
    mask[:5] = 1
    support, _ = omp_encode_masked(D, y, mask, Budget(10), min_energy=0.0)
    assert len(support) <= 5


def test_batch_equals_single_and_threads_deterministic(rng):
    D = random_dictionary(rng, 64, 128)
    Y = rng.standard_normal((64, 3000))
    omp.set_num_threads(1)
    one = encode_batch(D, Y, Budget(5))
    omp.set_num_threads(4)
    many = encode_batch(D, Y, Budget(5))
    omp.set_num_threads(None)
    np.testing.assert_array_equal(one.indices, many.indices)
    np.testing.assert_array_equal(one.coefs, many.coefs)
    s, c = omp_encode(D, Y[:, 7], Budget(5))
    np.testing.assert_array_equal(one.indices[7, :len(s)], s)


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled kernel not built")
def test_backends_agree(rng):
    D = random_dictionary(rng, 64, 256)
    Y = rng.standard_normal((64, 400)) * 30
    M = (rng.random(Y.shape) > 0.4).astype(float)
    for mask in (None, M):
        a = encode_batch(D, Y, Both(8, 10.0), mask=mask, backend="cython")
        b = encode_batch(D, Y, Both(8, 10.0), mask=mask, backend="python")
        np.testing.assert_array_equal(a.indices, b.indices)
        np.testing.assert_allclose(a.coefs, b.coefs, atol=1e-9)


def test_reconstruct_matches_dense(rng):
    D = random_dictionary(rng, 10, 20)
    code = encode_batch(D, rng.standard_normal((10, 6)), Budget(3))
    np.testing.assert_allclose(reconstruct(D, code), D @ code.to_dense(20))


def test_sparse_code_helpers():
    code = SparseCode.from_columns([[(2, 1.5)], [], [(0, -1.0), (3, 2.0)]])
    assert code.nnz == 3
    assert list(code.counts) == [1, 0, 2]
    assert code.column(2) == [(0, -1.0), (3, 2.0)]
    with pytest.raises(ValueError):
        SparseCode.from_columns([[(0, 1.0), (1, 1.0)]], t=1)


def test_stop_rule_validation():
    with pytest.raises(ValueError):
        StopRule()
    with pytest.raises(ValueError):
        Budget(0)
    with pytest.raises(ValueError):
        Tolerance(-1.0)
    assert Budget(100).cap(64) == 64


def test_dictionary_validation(rng):
    with pytest.raises(ValueError):
        encode_batch(np.ones((4, 3)), np.ones(4), Budget(1))
    D = random_dictionary(rng, 4, 3)
    D[:, 1] = 0
    with pytest.raises(ValueError):
        encode_batch(D, np.ones(4), Budget(1))
    with pytest.raises(ValueError):
        encode_batch(random_dictionary(rng, 4, 3), np.ones(5), Budget(1))


def test_pure_python_backend_selected_by_env():
    import os
    import subprocess
    import sys
    env = dict(os.environ, CASCADESC_PURE="1")
    out = subprocess.run([sys.executable, "-c", "import cascadesc.omp as o; print(o.BACKEND)"],
                         capture_output=True, text=True, env=env)
    assert out.stdout.strip() == "python"
