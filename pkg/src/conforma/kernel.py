"""Isotropic Gaussian kernel and Gram-matrix assembly."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch


class KernelKind(str, enum.Enum):
    GAUSSIAN_ISOTROPIC = "gaussian_isotropic"


@dataclass(frozen=True)
class KernelParams:
    """Kernel hyperparameters.

    ``theta`` is the precision (inverse squared length scale) in
    ``k(x, x') = exp(-theta * ||x - x'||^2)``.
    """

    theta: float
    kind: KernelKind = KernelKind.GAUSSIAN_ISOTROPIC

    def __post_init__(self):
        if not (math.isfinite(self.theta) and self.theta > 0):
            raise ValueError(f"theta must be positive and finite, got {self.theta!r}")
        object.__setattr__(self, "kind", KernelKind(self.kind))


def as_points(X) -> np.ndarray:
    """Coerce input points to a 2-d float array of shape ``(n, d)``.

    A 1-d array is read as ``n`` one-dimensional points.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 0:
        X = X.reshape(1, 1)
    elif X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise DimensionMismatch(f"points must be 1-d or 2-d, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("points have non-finite coordinates")
    return X


def as_point(x) -> np.ndarray:
    """A single point as a 1-d coordinate array."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1:
        raise DimensionMismatch(f"a point must be 1-d, got shape {x.shape}")
    return x


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        X = as_points(self.inputs)
        y = np.asarray(self.targets, dtype=float).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise DimensionMismatch(f"{X.shape[0]} inputs but {y.shape[0]} targets")
        if not np.all(np.isfinite(y)):
            raise ValueError("targets have non-finite values")
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "targets", y)

    def __len__(self) -> int:
        return self.targets.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]


def _sq_dist(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    if X.shape[1] != Y.shape[1]:
        raise DimensionMismatch(f"dimension {X.shape[1]} vs {Y.shape[1]}")
    # coordinate-wise differences keep the result exactly symmetric with a
    # zero diagonal, unlike the |x|^2 + |y|^2 - 2<x, y> expansion
    D = np.zeros((X.shape[0], Y.shape[0]))
    for k in range(X.shape[1]):
        diff = X[:, k, None] - Y[None, :, k]
        D += diff * diff
    return D


def eval_kernel(p: KernelParams, x, x2) -> float:
    x, x2 = as_point(x), as_point(x2)
    if x.shape != x2.shape:
        raise DimensionMismatch(f"dimension {x.shape[0]} vs {x2.shape[0]}")
    d = x - x2
    return math.exp(-p.theta * float(d @ d))


def gram(p: KernelParams, X) -> np.ndarray:
    X = as_points(X)
    if X.shape[0] == 0:
        raise ValueError("empty point set")
    return np.exp(-p.theta * _sq_dist(X, X))


def cross_gram(p: KernelParams, X, Xs) -> np.ndarray:
    """Kernel values between ``X`` (rows) and ``Xs`` (columns)."""
    return np.exp(-p.theta * _sq_dist(as_points(X), as_points(Xs)))
