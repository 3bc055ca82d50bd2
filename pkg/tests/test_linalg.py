"""Hand-written kernels checked against numpy's LAPACK-backed routines."""
import numpy as np
import pytest

from hypergcl.linalg import (
    NotSPDError,
    cholesky,
    jacobi_eigh,
    jacobi_svd_values,
    solve_lower,
    solve_upper,
    spd_inverse,
    spd_logdet,
)


@pytest.mark.parametrize("d", [1, 2, 5, 16, 40])
def test_cholesky_matches_numpy(d):
    rng = np.random.default_rng(d)
    a = rng.standard_normal((d, d))
    spd = a @ a.T + d * np.eye(d)
    assert np.allclose(cholesky(spd), np.linalg.cholesky(spd), atol=1e-10)


def test_cholesky_rejects_indefinite():
    with pytest.raises(NotSPDError):
        cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(NotSPDError):
        cholesky(np.zeros((3, 3)))


def test_triangular_solves():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((6, 6))
    spd = a @ a.T + 6 * np.eye(6)
    L = cholesky(spd)
    b = rng.standard_normal(6)
    assert np.allclose(L @ solve_lower(L, b), b, atol=1e-12)
    assert np.allclose(L.T @ solve_upper(L.T, b), b, atol=1e-12)
    B = rng.standard_normal((6, 3))
    assert np.allclose(L @ solve_lower(L, B), B, atol=1e-12)


def test_spd_inverse_and_logdet():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((8, 8))
    spd = a @ a.T + 8 * np.eye(8)
    assert np.allclose(spd_inverse(spd), np.linalg.inv(spd), atol=1e-10)
    assert spd_logdet(spd) == pytest.approx(np.linalg.slogdet(spd)[1], abs=1e-10)


@pytest.mark.parametrize("shape", [(5, 5), (12, 4), (4, 12), (30, 7)])
def test_jacobi_svd_values_match_numpy(shape):
    rng = np.random.default_rng(sum(shape))
    m = rng.standard_normal(shape)
    assert np.allclose(jacobi_svd_values(m), np.linalg.svd(m, compute_uv=False), atol=1e-10)


def test_jacobi_svd_rank_deficient():
    rng = np.random.default_rng(3)
    u = rng.standard_normal((10, 2))
    v = rng.standard_normal((2, 6))
    m = u @ v  # rank 2
    s = jacobi_svd_values(m)
    assert np.allclose(s[2:], 0.0, atol=1e-10)
    assert np.allclose(s, np.linalg.svd(m, compute_uv=False), atol=1e-10)


@pytest.mark.parametrize("d", [1, 2, 6, 16])
def test_jacobi_eigh_matches_numpy(d):
    rng = np.random.default_rng(d + 100)
    a = rng.standard_normal((d, d))
    sym = (a + a.T) / 2.0
    w, vecs = jacobi_eigh(sym)
    assert np.allclose(np.sort(w), np.linalg.eigvalsh(sym), atol=1e-10)
    # eigenvector residuals
    assert np.max(np.abs(sym @ vecs - vecs * w)) < 1e-9
    # orthonormal columns
    assert np.allclose(vecs.T @ vecs, np.eye(d), atol=1e-10)
