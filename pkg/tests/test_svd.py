"""One-sided Jacobi SVD against the numpy LAPACK oracle."""

import numpy as np
import pytest

from graphkde.errors import DimensionError, NumericalError
from graphkde.linalg import svd


def assert_valid_svd(a, res, rtol=1e-8):
    n = a.shape[0]
    assert res.s.shape == (n,)
    assert np.all(res.s >= 0.0)
    assert np.all(np.diff(res.s) <= 1e-12)
    np.testing.assert_allclose(res.u.T @ res.u, np.eye(n), atol=1e-8)
    np.testing.assert_allclose(res.v.T @ res.v, np.eye(n), atol=1e-8)
    recon = res.u @ np.diag(res.s) @ res.v.T
    scale = max(np.linalg.norm(a), 1.0)
    assert np.linalg.norm(recon - a) / scale < rtol


def test_diagonal_matrix():
    res = svd(np.diag([3.0, 1.0]))
    np.testing.assert_allclose(res.s, [3.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(np.abs(res.u), np.eye(2), atol=1e-12)
    np.testing.assert_allclose(np.abs(res.v), np.eye(2), atol=1e-12)


def test_permutation_matrix():
    a = np.array([[0.0, 1.0], [1.0, 0.0]])
    res = svd(a)
    np.testing.assert_allclose(res.s, [1.0, 1.0], atol=1e-12)
    assert_valid_svd(a, res)


def test_random_adjacency_reconstruction():
    rng = np.random.default_rng(0)
    n = 20
    a = np.triu((rng.random((n, n)) < 0.3).astype(float), 1)
    a = a + a.T
    res = svd(a)
    assert_valid_svd(a, res)
    np.testing.assert_allclose(res.s, np.linalg.svd(a, compute_uv=False), atol=1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_matches_lapack_on_random_matrices(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 13))
    a = rng.normal(size=(n, n))
    if seed % 3 == 0 and n > 1:
        a[:, rng.integers(n)] = 0.0
    if seed % 4 == 0 and n > 2:
        a[:, 1] = a[:, 0]
    res = svd(a)
    assert_valid_svd(a, res)
    np.testing.assert_allclose(
        res.s, np.linalg.svd(a, compute_uv=False), atol=1e-8 * max(1.0, abs(a).max())
    )


def test_zero_matrix():
    res = svd(np.zeros((4, 4)))
    np.testing.assert_allclose(res.s, 0.0)
    np.testing.assert_allclose(res.u.T @ res.u, np.eye(4), atol=1e-12)


def test_one_by_one():
    res = svd([[-5.0]])
    np.testing.assert_allclose(res.s, [5.0])
    np.testing.assert_allclose(res.u * res.s[0] * res.v, [[-5.0]])


def test_singular_values_invariant_under_permutation():
    rng = np.random.default_rng(42)
    a = rng.normal(size=(8, 8))
    perm = rng.permutation(8)
    s1 = svd(a).s
    s2 = svd(a[perm][:, perm]).s
    np.testing.assert_allclose(s1, s2, atol=1e-8)


def test_rejects_nonsquare_and_nonfinite():
    with pytest.raises(DimensionError):
        svd(np.ones((2, 3)))
    with pytest.raises(NumericalError):
        svd([[np.nan, 0.0], [0.0, 1.0]])
