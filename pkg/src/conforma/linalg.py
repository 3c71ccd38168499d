"""Dense SPD factorization and the primitives built on it."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import DimensionMismatch, NotPositiveDefinite


@dataclass(frozen=True)
class CholFactor:
    """Lower Cholesky factor ``L`` with ``L @ L.T == A``."""

    lower: np.ndarray

    @property
    def order(self) -> int:
        return self.lower.shape[0]


def as_symmetric(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    if not np.array_equal(A, A.T):
        raise ValueError("matrix is not exactly symmetric")
    return A


def cholesky_factorize(A) -> CholFactor:
    """Factorize a symmetric positive definite matrix.

    No pivoting is done. A nonpositive pivot raises :class:`NotPositiveDefinite`.
    """
    A = as_symmetric(A)
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    d = np.diag(L)
    if not np.all(np.isfinite(L)) or np.any(d <= 0.0):
        raise NotPositiveDefinite("nonpositive pivot in Cholesky factorization")
    L.flags.writeable = False
    return CholFactor(L)


def solve_spd(F: CholFactor, rhs) -> np.ndarray:
    """Solve ``A x = rhs``; ``rhs`` may be a vector or a matrix of columns."""
    rhs = np.asarray(rhs, dtype=float)
    if rhs.ndim == 0 or rhs.shape[0] != F.order:
        raise DimensionMismatch(
            f"rhs has leading dimension {rhs.shape[:1]}, factor has order {F.order}"
        )
    return cho_solve((F.lower, True), rhs, check_finite=False)


def log_det(F: CholFactor) -> float:
    return float(2.0 * np.sum(np.log(np.diag(F.lower))))


def spd_inverse_diagonal(F: CholFactor) -> np.ndarray:
    """Diagonal of ``A^{-1}``.

    With ``W = L^{-1}``, ``A^{-1} = W.T @ W`` so the diagonal is the column-wise
    sum of squares of ``W``.
    """
    W = solve_triangular(F.lower, np.eye(F.order), lower=True, check_finite=False)
    return np.einsum("ij,ij->j", W, W)
