"""Gaussian-process view of KRR: predictive law, intervals, and likelihood."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .errors import (
    AllPointsFailed,
    DimensionMismatch,
    InvalidAlpha,
    InvalidProbability,
    NotPositiveDefinite,
)
from .kernel import Dataset, KernelParams, as_point, as_points, cross_gram
from .krr import FittedKRR, regularized_gram
from .linalg import cholesky_factorize, log_det, solve_spd

SIGMA2_FLOOR = 1e-12

#: 25 log-spaced precisions in [1, 1e4]
DEFAULT_THETA_GRID = tuple(float(t) for t in np.logspace(0.0, 4.0, 25))


@dataclass(frozen=True)
class GPRPrediction:
    mean: float
    variance: float
    interval: Optional[tuple] = None


@dataclass(frozen=True)
class MLEResult:
    theta_hat: float
    sigma2_hat: float
    log_likelihood: float


# Rational approximation of the standard normal quantile (P. J. Acklam),
# relative error ~1.2e-9 before refinement.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _acklam_lower(g: float) -> float:
    # valid for 0 < g <= 0.5
    if g < _P_LOW:
        q = math.sqrt(-2.0 * math.log(g))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        return num / den
    q = g - 0.5
    r = q * q
    num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
    den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
    return num / den


def std_normal_quantile(g: float) -> float:
    """Inverse of the standard normal CDF.

    Rational approximation followed by one Newton step on the CDF; the lower
    half is computed directly and the upper half by symmetry.
    """
    g = float(g)
    if not 0.0 < g < 1.0:
        raise InvalidProbability(f"probability must lie in (0, 1), got {g!r}")
    if g == 0.5:
        return 0.0
    if g > 0.5:
        return -std_normal_quantile(1.0 - g)
    x = _acklam_lower(g)
    cdf = 0.5 * math.erfc(-x / math.sqrt(2.0))
    pdf = math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return x - (cdf - g) / pdf


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise InvalidAlpha(f"alpha must lie in (0, 1), got {alpha!r}")
    return alpha


def posterior_moments(m: FittedKRR, Xs, sigma2: float):
    """Vectorized predictive mean and variance at the rows of ``Xs``.

    The kernel-only variance factor is clipped to ``[lam, lam + 1]``, the range
    it occupies in exact arithmetic for a unit-diagonal kernel.
    """
    Xs = as_points(Xs)
    if Xs.shape[1] != m.data.dim:
        raise DimensionMismatch(f"model dimension {m.data.dim}, got {Xs.shape[1]}")
    Kx = cross_gram(m.params, m.data.inputs, Xs)
    mean = Kx.T @ m.beta
    V = solve_triangular(m.factor.lower, Kx, lower=True, check_finite=False)
    reduction = np.einsum("ij,ij->j", V, V)
    s2k = np.clip(m.lam + 1.0 - reduction, m.lam, m.lam + 1.0)
    return mean, sigma2 * s2k


def gpr_posterior(m: FittedKRR, xs, sigma2: float) -> GPRPrediction:
    if not sigma2 > 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2!r}")
    xs = as_point(xs)
    mean, var = posterior_moments(m, xs[None, :], sigma2)
    return GPRPrediction(float(mean[0]), float(var[0]))


def gpr_interval(m: FittedKRR, xs, sigma2: float, alpha: float) -> GPRPrediction:
    """Posterior with the symmetric ``1 - alpha`` predictive interval attached."""
    alpha = _check_alpha(alpha)
    pred = gpr_posterior(m, xs, sigma2)
    half = std_normal_quantile(1.0 - alpha / 2.0) * math.sqrt(pred.variance)
    return GPRPrediction(pred.mean, pred.variance, (pred.mean - half, pred.mean + half))


def _quad_and_logdet(data: Dataset, lam: float, params: KernelParams):
    F = cholesky_factorize(regularized_gram(data.inputs, lam, params))
    y = data.targets
    return float(y @ solve_spd(F, y)), log_det(F)


def _loglik(n: int, sigma2: float, quad: float, logdet: float) -> float:
    return (-0.5 * n * math.log(2.0 * math.pi) - 0.5 * n * math.log(sigma2)
            - 0.5 * logdet - 0.5 * quad / sigma2)


def log_marginal_likelihood(data: Dataset, lam: float, params: KernelParams,
                            sigma2: float) -> float:
    """Gaussian log likelihood of the targets under covariance ``sigma2 (lam I + K)``."""
    if not (lam > 0 and sigma2 > 0):
        raise ValueError("lambda and sigma2 must be positive")
    quad, logdet = _quad_and_logdet(data, lam, params)
    return _loglik(len(data), sigma2, quad, logdet)


def profile_sigma2(data: Dataset, lam: float, params: KernelParams) -> float:
    """Closed-form maximizer ``y' R^{-1} y / n`` of the likelihood over sigma2.

    All-zero targets give the floor ``1e-12`` instead of an error so that
    intervals stay defined.
    """
    quad, _ = _quad_and_logdet(data, lam, params)
    return max(quad / len(data), SIGMA2_FLOOR)


def mle_theta(data: Dataset, lam: float,
              grid: Sequence[float] = DEFAULT_THETA_GRID) -> MLEResult:
    """Grid search of the profile likelihood over kernel precision.

    Grid points whose Gram system fails to factorize are skipped. Ties go to
    the smaller precision regardless of grid order.
    """
    grid = [float(t) for t in grid]
    if not grid or any(not t > 0 for t in grid):
        raise ValueError("grid must be nonempty with positive entries")
    n = len(data)
    best = None
    for theta in sorted(set(grid)):
        try:
            quad, logdet = _quad_and_logdet(data, lam, KernelParams(theta))
        except NotPositiveDefinite:
            continue
        s2 = max(quad / n, SIGMA2_FLOOR)
        ll = _loglik(n, s2, quad, logdet)
        if best is None or ll > best.log_likelihood:
            best = MLEResult(theta, s2, ll)
    if best is None:
        raise AllPointsFailed("no grid point produced a positive definite system")
    return best
