"""Dense linear-algebra kernels for small matrices.

Everything here is written directly against numpy arrays (no LAPACK
wrappers): Cholesky factorization, triangular solves, one-sided Jacobi
singular values and cyclic Jacobi eigendecomposition.  Accuracy on small
dense matrices (d <= 512) matters more than speed for this toolkit.
"""
from __future__ import annotations

import numpy as np

__all__ = [
    "NotSPDError",
    "cholesky",
    "solve_lower",
    "solve_upper",
    "spd_inverse",
    "spd_logdet",
    "jacobi_svd_values",
    "jacobi_eigh",
]


class NotSPDError(ValueError):
    """Raised when a Cholesky pivot fails: matrix is not positive definite."""


def cholesky(a: np.ndarray) -> np.ndarray:
    """Lower-triangular L with L @ L.T = a.

    Raises NotSPDError if a pivot is non-positive.  The caller owns any
    jitter policy; no regularization happens here.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"cholesky expects a square matrix, got shape {a.shape}")
    n = a.shape[0]
    L = np.zeros((n, n))
    for j in range(n):
        s = a[j, j] - L[j, :j] @ L[j, :j]
        if not np.isfinite(s) or s <= 0.0:
            raise NotSPDError(f"Cholesky pivot {j} = {s:.6e}; matrix is not SPD")
        L[j, j] = np.sqrt(s)
        if j + 1 < n:
            L[j + 1 :, j] = (a[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]) / L[j, j]
    return L


def solve_lower(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve L x = b by forward substitution (b may be a vector or matrix)."""
    L = np.asarray(L, dtype=float)
    x = np.array(b, dtype=float)
    vec = x.ndim == 1
    if vec:
        x = x[:, None]
    for i in range(L.shape[0]):
        x[i] = (x[i] - L[i, :i] @ x[:i]) / L[i, i]
    return x[:, 0] if vec else x


def solve_upper(U: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve U x = b by back substitution."""
    U = np.asarray(U, dtype=float)
    x = np.array(b, dtype=float)
    vec = x.ndim == 1
    if vec:
        x = x[:, None]
    n = U.shape[0]
    for i in range(n - 1, -1, -1):
        x[i] = (x[i] - U[i, i + 1 :] @ x[i + 1 :]) / U[i, i]
    return x[:, 0] if vec else x


def spd_inverse(a: np.ndarray) -> np.ndarray:
    """Inverse of an SPD matrix via Cholesky; output symmetrized."""
    L = cholesky(a)
    eye = np.eye(L.shape[0])
    inv = solve_upper(L.T, solve_lower(L, eye))
    return (inv + inv.T) / 2.0


def spd_logdet(a: np.ndarray) -> float:
    """log det of an SPD matrix, 2 * sum(log diag L)."""
    L = cholesky(a)
    return float(2.0 * np.sum(np.log(np.diag(L))))


def jacobi_svd_values(a: np.ndarray, tol: float = 1e-13, max_sweeps: int = 60) -> np.ndarray:
    """Singular values of a dense matrix by one-sided Jacobi, descending.

    Columns are rotated pairwise until mutually orthogonal; the singular
    values are then the column norms.  Quadratically convergent and robust
    for the matrix sizes used here.
    """
    a = np.array(a, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {a.shape}")
    if a.shape[0] < a.shape[1]:
        a = a.T
    n = a.shape[1]
    if n == 1:
        return np.array([np.linalg.norm(a[:, 0])])
    for _ in range(max_sweeps):
        worst = 0.0
        for i in range(n - 1):
            for j in range(i + 1, n):
                ai = a[:, i].copy()
                aj = a[:, j].copy()
                alpha = ai @ ai
                beta = aj @ aj
                gamma = ai @ aj
                if alpha == 0.0 or beta == 0.0:
                    continue
                rel = abs(gamma) / np.sqrt(alpha * beta)
                worst = max(worst, rel)
                if rel <= tol:
                    continue
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.sign(zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                if zeta == 0.0:
                    t = 1.0
                cs = 1.0 / np.sqrt(1.0 + t * t)
                sn = cs * t
                a[:, i] = cs * ai - sn * aj
                a[:, j] = sn * ai + cs * aj
        if worst <= tol:
            break
    s = np.sqrt(np.sum(a * a, axis=0))
    return np.sort(s)[::-1]


def jacobi_eigh(a: np.ndarray, tol: float = 1e-13, max_sweeps: int = 100):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues descending, eigenvectors as columns).  The input
    is symmetrized before iterating.
    """
    A = np.array(a, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    A = (A + A.T) / 2.0
    n = A.shape[0]
    V = np.eye(n)
    if n == 1:
        return A.diagonal().copy(), V
    norm = np.sqrt(np.sum(A * A))
    for _ in range(max_sweeps):
        off = np.sqrt(2.0 * np.sum(np.tril(A, -1) ** 2))
        if off <= tol * max(norm, 1e-300):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                if tau == 0.0:
                    t = 1.0
                else:
                    t = np.sign(tau) / (abs(tau) + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                colp = A[:, p].copy()
                colq = A[:, q].copy()
                A[:, p] = c * colp - s * colq
                A[:, q] = s * colp + c * colq
                rowp = A[p, :].copy()
                rowq = A[q, :].copy()
                A[p, :] = c * rowp - s * rowq
                A[q, :] = s * rowp + c * rowq
                vp = V[:, p].copy()
                vq = V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    w = A.diagonal().copy()
    order = np.argsort(w)[::-1]
    return w[order], V[:, order]
