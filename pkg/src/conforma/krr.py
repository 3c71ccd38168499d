"""Kernel ridge regression in the dual, with in-sample and leave-one-out residuals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .kernel import Dataset, KernelParams, as_points, cross_gram, gram
from .linalg import CholFactor, cholesky_factorize, solve_spd, spd_inverse_diagonal


@dataclass(frozen=True)
class FittedKRR:
    """A factorized regularized Gram system ``(lam * I + K) beta = y``.

    ``q_diag`` holds the diagonal of ``(lam * I + K)^{-1}``; it is shared by
    the leave-one-out residuals and the leverage scores.
    """

    data: Dataset
    lam: float
    params: KernelParams
    factor: CholFactor
    beta: np.ndarray
    q_diag: np.ndarray

    @property
    def n(self) -> int:
        return len(self.data)


def regularized_gram(X, lam: float, params: KernelParams) -> np.ndarray:
    R = gram(params, X)
    R[np.diag_indices_from(R)] += lam
    return R


def krr_fit(data: Dataset, lam: float, params: KernelParams) -> FittedKRR:
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam!r}")
    if len(data) < 1:
        raise ValueError("need at least one observation")
    F = cholesky_factorize(regularized_gram(data.inputs, lam, params))
    beta = solve_spd(F, data.targets)
    return FittedKRR(data, float(lam), params, F, beta, spd_inverse_diagonal(F))


def krr_predict(m: FittedKRR, Xs) -> np.ndarray:
    Xs = as_points(Xs)
    if Xs.shape[1] != m.data.dim:
        raise DimensionMismatch(f"model dimension {m.data.dim}, got {Xs.shape[1]}")
    return cross_gram(m.params, m.data.inputs, Xs).T @ m.beta


def residuals_in_sample(m: FittedKRR) -> np.ndarray:
    # y - K beta == lam * beta exactly in exact arithmetic; the right-hand form
    # avoids cancellation when lam is tiny
    return m.lam * m.beta


def residuals_loo(m: FittedKRR) -> np.ndarray:
    """Deleted residuals ``y_i - yhat_{-i}(x_i)`` via the leverage identity.

    For ``n == 1`` the prediction from the empty sample is the prior mean 0.
    """
    return residuals_in_sample(m) / (m.lam * m.q_diag)


def leverage(m: FittedKRR) -> np.ndarray:
    """Leverage factors ``m_i = 1 / [(lam I + K)^{-1}]_{ii}``.

    Equals ``lam + k(x_i, x_i) - k_{-i}' Q_{-i} k_{-i}`` by the Schur complement.
    """
    return 1.0 / m.q_diag
