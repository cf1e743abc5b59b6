"""SVD-based projection and pseudo-inverse kernels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

RANK_TOL = 1e-10


@dataclass(frozen=True)
class OrthoBasis:
    """Orthonormal basis ``U`` (n x r) of a column space."""

    U: np.ndarray
    source_dim: int

    @property
    def r(self) -> int:
        return self.U.shape[1]

    @property
    def n(self) -> int:
        return self.U.shape[0]

    def matrix(self) -> np.ndarray:
        """Dense projection matrix ``U U^T``; only for small n."""
        return self.U @ self.U.T


def _svd(A):
    return np.linalg.svd(np.asarray(A, dtype=float), full_matrices=False)


def range_basis(A: np.ndarray, rank_tol: float = RANK_TOL) -> OrthoBasis:
    """Orthonormal basis of range(A).

    Singular directions with singular value at most ``rank_tol`` times the
    largest one are dropped, so an all-zero ``A`` gives ``r = 0``.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if not np.all(np.isfinite(A)):
        raise InvalidArgumentError("matrix has non-finite entries")
    n, m = A.shape
    if m == 0 or n == 0:
        return OrthoBasis(np.zeros((n, 0)), m)
    U, s, _ = _svd(A)
    if s.size == 0 or s[0] == 0.0:
        return OrthoBasis(np.zeros((n, 0)), m)
    keep = s > rank_tol * s[0]
    return OrthoBasis(np.ascontiguousarray(U[:, keep]), m)


def project(basis: OrthoBasis, v: np.ndarray) -> np.ndarray:
    """Orthogonal projection ``U (U^T v)``; ``v`` may be a vector or a matrix."""
    v = np.asarray(v, dtype=float)
    if v.shape[0] != basis.n:
        raise InvalidArgumentError(
            f"dimension mismatch: basis has {basis.n} rows, got {v.shape[0]}")
    return basis.U @ (basis.U.T @ v)


def project_out(basis: OrthoBasis, v: np.ndarray) -> np.ndarray:
    """Residual ``v - U (U^T v)``."""
    return np.asarray(v, dtype=float) - project(basis, v)


def spectral_norm(A: np.ndarray) -> float:
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0.0
    return float(np.linalg.svd(A, compute_uv=False)[0])


def pinv_apply(A: np.ndarray, b: np.ndarray, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Minimum-norm least-squares solution ``A^+ b`` via truncated SVD."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.shape[0] != b.shape[0]:
        raise InvalidArgumentError(
            f"row dimension {A.shape[0]} does not match rhs {b.shape[0]}")
    out_shape = (A.shape[1],) + b.shape[1:]
    if A.size == 0:
        return np.zeros(out_shape)
    U, s, Vt = _svd(A)
    if s[0] == 0.0:
        return np.zeros(out_shape)
    keep = s > rank_tol * s[0]
    coef = (U[:, keep].T @ b)
    coef = coef / (s[keep][:, None] if coef.ndim == 2 else s[keep])
    return Vt[keep].T @ coef


def numerical_rank(A: np.ndarray, rank_tol: float = RANK_TOL) -> int:
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > rank_tol * s[0]))


def subspace_residual(a: OrthoBasis, b: OrthoBasis) -> float:
    """Largest of the two mutual projection residuals ``||(I - P_b) U_a||_S``.

    Zero exactly when the two bases span the same subspace.
    """
    if a.r != b.r:
        return float("inf")
    if a.r == 0:
        return 0.0
    r1 = spectral_norm(project_out(b, a.U))
    r2 = spectral_norm(project_out(a, b.U))
    return max(r1, r2)
