"""Exact conformal confidence regions on top of kernel ridge regression.

Both residual kinds are affine in the candidate test target ``z``:
``r_i(z) = lam * (c_i + b_i * z)``. The test row is stored last. Each training
row defines a closed set of ``z`` where it is at least as nonconforming as the
test row; the region is assembled by a sweep over the sorted endpoints of
those sets.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Optional, Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatch, InvalidAlpha
from .kernel import Dataset, KernelParams, as_point, as_points, cross_gram
from .krr import FittedKRR, krr_fit, krr_predict, regularized_gram
from .linalg import cholesky_factorize, solve_spd, spd_inverse_diagonal
from .region import ConfidenceRegion

#: relative tolerance under which two slopes (or intercepts) count as equal
TOL = 1e-12
# slack on the count threshold so that e.g. 3 * (2/3) still reads as 2
_LEVEL_SLACK = 1e-9
_REFINE_STEPS = 2


class ResidualKind(str, enum.Enum):
    IN_SAMPLE = "in_sample"
    LOO = "loo"


class NCM(str, enum.Enum):
    RRCM = "rrcm"
    CRR = "crr"
    CRR_UPPER = "crr_upper"
    CRR_LOWER = "crr_lower"


@dataclass(frozen=True)
class ResidualLine:
    """Affine coefficients of the augmented-sample residuals; test row last."""

    c: np.ndarray
    b: np.ndarray
    kind: ResidualKind
    lam: float

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).reshape(-1)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if c.shape != b.shape or c.size < 1:
            raise DimensionMismatch(f"c has {c.size} rows, b has {b.size}")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "kind", ResidualKind(self.kind))

    @property
    def size(self) -> int:
        """Rows in the augmented sample, ``n + 1``."""
        return self.c.size

    def residuals(self, z: float) -> np.ndarray:
        return self.lam * (self.c + self.b * z)


class PValue(NamedTuple):
    count: int
    total: int

    def __float__(self) -> float:
        return self.count / self.total


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha <= 1.0:
        raise InvalidAlpha(f"alpha must lie in (0, 1], got {alpha!r}")
    return alpha


def _min_count(total: int, level: float) -> float:
    return total * level - _LEVEL_SLACK


# --------------------------------------------------------------------------
# residual lines


def residual_line(train: Dataset, xs, lam: float, params: KernelParams,
                  kind=ResidualKind.IN_SAMPLE) -> ResidualLine:
    """Residual line from one factorization of the augmented Gram system.

    ``c`` solves the system for targets ``(y, 0)`` and ``b`` for the unit
    vector of the test row; in-sample residuals are ``lam`` times the dual
    weights. Deleted residuals rescale row ``i`` by ``1 / (lam * q_ii)``,
    which does not depend on ``z``.
    """
    kind = ResidualKind(kind)
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam!r}")
    if len(train) < 1:
        raise ValueError("empty training sample")
    xs = as_point(xs)
    if xs.shape[0] != train.dim:
        raise DimensionMismatch(f"train dimension {train.dim}, test point {xs.shape[0]}")
    n = len(train)
    X_aug = np.vstack([train.inputs, xs[None, :]])
    F = cholesky_factorize(regularized_gram(X_aug, lam, params))
    rhs = np.zeros((n + 1, 2))
    rhs[:n, 0] = train.targets
    rhs[n, 1] = 1.0
    sol = solve_spd(F, rhs)
    c, b = sol[:, 0], sol[:, 1]
    if kind is ResidualKind.LOO:
        scale = lam * spd_inverse_diagonal(F)
        c, b = c / scale, b / scale
    return ResidualLine(c, b, kind, lam)


def residual_line_matrices(m: FittedKRR, Xs, kind=ResidualKind.IN_SAMPLE):
    """Coefficients for many test points at once from a fitted training model.

    Uses the block inverse of the augmented system, so each test point costs
    ``O(n^2)`` on top of the existing factorization. Returns ``(C, B)`` of
    shape ``(n + 1, len(Xs))``; column ``j`` belongs to ``Xs[j]``.
    """
    kind = ResidualKind(kind)
    Xs = as_points(Xs)
    if Xs.shape[1] != m.data.dim:
        raise DimensionMismatch(f"model dimension {m.data.dim}, got {Xs.shape[1]}")
    lam = m.lam
    Kx = cross_gram(m.params, m.data.inputs, Xs)
    V = solve_triangular(m.factor.lower, Kx, lower=True, check_finite=False)
    QK = solve_triangular(m.factor.lower, V, lower=True, trans="T", check_finite=False)
    # leverage of the test row: lam + k(x, x) - k' Q k, with k(x, x) == 1
    lev = np.clip(lam + 1.0 - np.einsum("ij,ij->j", V, V), lam, lam + 1.0)
    kQy = Kx.T @ m.beta
    B = np.vstack([-QK, np.ones((1, Xs.shape[0]))]) / lev
    C = np.vstack([m.beta[:, None] + QK * (kQy / lev), (-kQy / lev)[None, :]])
    if kind is ResidualKind.LOO:
        q_aug = np.vstack([m.q_diag[:, None] + QK * QK / lev, (1.0 / lev)[None, :]])
        C, B = C / (lam * q_aug), B / (lam * q_aug)
    return C, B


def residual_lines(m: FittedKRR, Xs, kind=ResidualKind.IN_SAMPLE) -> Iterator[ResidualLine]:
    kind = ResidualKind(kind)
    C, B = residual_line_matrices(m, Xs, kind)
    for j in range(C.shape[1]):
        yield ResidualLine(C[:, j], B[:, j], kind, m.lam)


# --------------------------------------------------------------------------
# coverage sweep


@dataclass(frozen=True)
class CoverageProfile:
    """Piecewise-constant count of sets covering each ``z``.

    ``points`` are the sorted distinct finite endpoints ``g_1 < ... < g_J``.
    ``counts`` has ``2J + 1`` cells: even index ``2j`` is the open gap
    ``(g_j, g_{j+1})`` (with ``g_0 = -inf``, ``g_{J+1} = inf``), odd index
    ``2j - 1`` is the point ``g_j``. Counts include the test row itself.
    """

    points: np.ndarray
    counts: np.ndarray
    total: int

    def keep(self, level: float) -> np.ndarray:
        return self.counts >= _min_count(self.total, level)

    def region(self, level: float) -> ConfidenceRegion:
        """Union of cells whose count reaches ``total * level``.

        Every set is closed, so a kept gap always has kept endpoints and each
        run of kept cells starts and ends on a point or at infinity.
        """
        keep = self.keep(level)
        if not keep.any():
            return ConfidenceRegion()
        padded = np.concatenate([[False], keep, [False]])
        edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
        starts, stops = edges[0::2], edges[1::2] - 1
        g = self.points
        last = keep.size - 1
        comps = []
        for s, e in zip(starts.tolist(), stops.tolist()):
            lo = -math.inf if s == 0 else g[(s - 1) // 2] if s % 2 else g[s // 2 - 1]
            hi = math.inf if e == last else g[(e - 1) // 2] if e % 2 else g[e // 2]
            comps.append((float(lo), float(hi)))
        return ConfidenceRegion(comps)

    def count_at(self, z: float) -> int:
        j = int(np.searchsorted(self.points, z, side="left"))
        if j < self.points.size and self.points[j] == z:
            return int(self.counts[2 * j + 1])
        return int(self.counts[2 * j])


def coverage_profile(lo: np.ndarray, hi: np.ndarray, total: int) -> CoverageProfile:
    """Sweep closed intervals ``[lo_k, hi_k]`` (infinite ends allowed).

    ``O(K log K)`` for the sort plus ``O(K)`` for the difference array.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    ends = np.concatenate([lo, hi])
    g = np.unique(ends[np.isfinite(ends)])
    J = g.size
    n_cells = 2 * J + 1
    start = np.where(np.isneginf(lo), 0, 2 * np.searchsorted(g, lo) + 1)
    stop = np.where(np.isposinf(hi), n_cells - 1, 2 * np.searchsorted(g, hi) + 1)
    diff = np.zeros(n_cells + 1, dtype=np.int64)
    np.add.at(diff, start, 1)
    np.add.at(diff, stop + 1, -1)
    counts = np.cumsum(diff[:-1]) + 1  # the test row always conforms with itself
    return CoverageProfile(g, counts, int(total))


def _split(c, b):
    return c[:-1], b[:-1], c[-1], b[-1]


def _equal_masks(ci, bi, ct, bt):
    eq_b = np.abs(bi - bt) <= TOL * max(1.0, abs(bt))
    eq_c = np.abs(ci - ct) <= TOL * max(1.0, abs(ct))
    return eq_b, eq_c


def _rrcm_sets(c: np.ndarray, b: np.ndarray):
    """Closed intervals covering ``{z : |c_i + b_i z| >= |c_t + b_t z|}``.

    Rows are first sign-normalized to ``b >= 0``. A row may contribute zero
    (empty set), one, or two (complement of an open interval) intervals.
    """
    flip = b < 0
    c = np.where(flip, -c, c)
    b = np.where(flip, -b, b)
    ci, bi, ct, bt = _split(c, b)
    eq_b, eq_c = _equal_masks(ci, bi, ct, bt)
    ctol = TOL * max(1.0, abs(ct))
    flat = eq_b & (bt <= TOL * max(1.0, abs(bt)))
    parallel = eq_b & ~flat
    with np.errstate(divide="ignore", invalid="ignore"):
        p = -(ci + ct) / (bi + bt)
        q = (ci - ct) / (bt - bi)
    lo_pq, hi_pq = np.fmin(p, q), np.fmax(p, q)

    full = (flat & (np.abs(ci) >= abs(ct) - ctol)) | (parallel & eq_c)
    right = parallel & ~eq_c & (ci > ct)
    left = parallel & ~eq_c & (ci < ct)
    inner = ~eq_b & (bt > bi)
    outer = ~eq_b & (bi > bt)
    full |= outer & (lo_pq >= hi_pq)
    outer &= ~full

    inf = np.inf
    lo = np.concatenate([
        np.full(full.sum(), -inf), p[right], np.full(left.sum(), -inf),
        lo_pq[inner], np.full(outer.sum(), -inf), hi_pq[outer],
    ])
    hi = np.concatenate([
        np.full(full.sum(), inf), np.full(right.sum(), inf), p[left],
        hi_pq[inner], lo_pq[outer], np.full(outer.sum(), inf),
    ])
    return lo, hi


def _upper_sets(c: np.ndarray, b: np.ndarray):
    """Closed intervals covering ``{z : c_i + b_i z >= c_t + b_t z}`` (signed)."""
    ci, bi, ct, bt = _split(c, b)
    eq_b, _ = _equal_masks(ci, bi, ct, bt)
    full = eq_b & (ci >= ct - TOL * max(1.0, abs(ct)))
    with np.errstate(divide="ignore", invalid="ignore"):
        q = (ci - ct) / (bt - bi)
    right = ~eq_b & (bi > bt)
    left = ~eq_b & (bi < bt)
    inf = np.inf
    lo = np.concatenate([np.full(full.sum(), -inf), q[right], np.full(left.sum(), -inf)])
    hi = np.concatenate([np.full(full.sum(), inf), np.full(right.sum(), inf), q[left]])
    return lo, hi


def rrcm_profile(line: ResidualLine) -> CoverageProfile:
    return coverage_profile(*_rrcm_sets(line.c, line.b), line.size)


def crr_profiles(line: ResidualLine):
    """Coverage profiles of the upper and lower one-sided procedures."""
    upper = coverage_profile(*_upper_sets(line.c, line.b), line.size)
    lower = coverage_profile(*_upper_sets(-line.c, -line.b), line.size)
    return upper, lower


def rrcm_region(line: ResidualLine, alpha: float) -> ConfidenceRegion:
    """Ridge-regression confidence machine region ``{z : p(z) >= alpha}``.

    The nonconformity score is the absolute residual. ``O(n log n)`` time and
    ``O(n)`` memory in the number of rows.
    """
    return rrcm_profile(line).region(_check_alpha(alpha))


def crr_region(line: ResidualLine, alpha: float) -> ConfidenceRegion:
    """Two-sided region: upper and lower one-sided regions at ``alpha / 2``, intersected."""
    alpha = _check_alpha(alpha)
    upper, lower = crr_profiles(line)
    return upper.region(alpha / 2) & lower.region(alpha / 2)


def conformal_region(line: ResidualLine, alpha: float, ncm=NCM.RRCM) -> ConfidenceRegion:
    ncm = NCM(ncm)
    if ncm is NCM.RRCM:
        return rrcm_region(line, alpha)
    if ncm is NCM.CRR:
        return crr_region(line, alpha)
    upper, lower = crr_profiles(line)
    prof = upper if ncm is NCM.CRR_UPPER else lower
    return prof.region(_check_alpha(alpha))


# --------------------------------------------------------------------------
# p-values and the exhaustive oracle


def _count_conforming(resid: np.ndarray, ncm: NCM):
    """Rows at least as nonconforming as the last (test) row, itself included.

    ``resid`` is measured in units of ``c`` (residuals divided by lambda). A
    2-d array holds one candidate per column and gives one count per column.
    """
    ri, rt = resid[:-1], resid[-1]
    slack = TOL * np.maximum(1.0, np.abs(rt))
    if ncm is NCM.RRCM:
        hits = np.abs(ri) >= np.abs(rt) - slack
    elif ncm is NCM.CRR_UPPER:
        hits = ri >= rt - slack
    elif ncm is NCM.CRR_LOWER:
        hits = ri <= rt + slack
    else:
        raise ValueError(f"no single p-value for ncm {ncm.value!r}; use crr_upper/crr_lower")
    counts = np.sum(hits, axis=0) + 1
    return int(counts) if np.ndim(counts) == 0 else counts


def conformal_p_value(line: ResidualLine, z: float, ncm=NCM.RRCM) -> PValue:
    """Conformal p-value of candidate target ``z`` as ``(count, n + 1)``."""
    ncm = NCM(ncm)
    if not math.isfinite(z):
        raise ValueError("z must be finite")
    return PValue(_count_conforming(line.c + line.b * z, ncm), line.size)


def default_oracle_grid(train: Dataset, xs, lam: float, params: KernelParams,
                        num: int = 2001) -> np.ndarray:
    """Grid spanning ``yhat +/- 5 s`` with ``s`` the target sample std plus one."""
    yhat = float(krr_predict(krr_fit(train, lam, params), as_point(xs)[None, :])[0])
    y = train.targets
    s = (float(np.std(y, ddof=1)) if y.size > 1 else 0.0) + 1.0
    return np.linspace(yhat - 5.0 * s, yhat + 5.0 * s, num)


def brute_force_membership(train: Dataset, xs, lam: float, params: KernelParams,
                           kind, ncm, alpha: float, grid: Sequence[float]) -> np.ndarray:
    """Boolean mask of grid values whose conformal p-value reaches ``alpha``.

    Each candidate target gets its own dual solve of the augmented sample and
    its residuals are read off as ``y - K beta``; no affine shortcut in ``z``.
    """
    kind, ncm = ResidualKind(kind), NCM(ncm)
    alpha = _check_alpha(alpha)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing with at least 2 points")
    xs = as_point(xs)
    if xs.shape[0] != train.dim:
        raise DimensionMismatch(f"train dimension {train.dim}, test point {xs.shape[0]}")
    n = len(train)
    X_aug = np.vstack([train.inputs, xs[None, :]])
    R = regularized_gram(X_aug, lam, params)
    K = R - lam * np.eye(n + 1)
    F = cholesky_factorize(R)
    Y = np.empty((n + 1, grid.size))
    Y[:n] = train.targets[:, None]
    Y[n] = grid
    # y - K beta cancels badly for small lam; refine beta against an
    # extended-precision system residual and subtract in extended precision
    R_ext, Y_ext = R.astype(np.longdouble), Y.astype(np.longdouble)
    beta = solve_spd(F, Y).astype(np.longdouble)
    for _ in range(_REFINE_STEPS):
        beta += solve_spd(F, (Y_ext - R_ext @ beta).astype(float))
    resid = ((Y_ext - K.astype(np.longdouble) @ beta) / lam).astype(float)
    if kind is ResidualKind.LOO:
        resid = resid / (lam * spd_inverse_diagonal(F))[:, None]
    total = n + 1

    def passes(side: NCM, level: float) -> np.ndarray:
        counts = _count_conforming(resid, side)
        return counts >= _min_count(total, level)

    if ncm is NCM.CRR:
        return passes(NCM.CRR_UPPER, alpha / 2) & passes(NCM.CRR_LOWER, alpha / 2)
    return passes(ncm, alpha)


def brute_force_region(train: Dataset, xs, lam: float, params: KernelParams,
                       kind, ncm, alpha: float,
                       grid: Optional[Sequence[float]] = None) -> ConfidenceRegion:
    """Exhaustive-search region on a grid of candidate targets.

    Consecutive kept grid values are joined into closed intervals; an isolated
    kept value becomes a singleton.
    """
    if grid is None:
        grid = default_oracle_grid(train, xs, lam, params)
    grid = np.asarray(grid, dtype=float)
    keep = brute_force_membership(train, xs, lam, params, kind, ncm, alpha, grid)
    padded = np.concatenate([[False], keep, [False]])
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return ConfidenceRegion(
        (grid[s], grid[e - 1]) for s, e in zip(edges[0::2], edges[1::2])
    )


def regions_agree(fast: ConfidenceRegion, grid, oracle_keep, margin: float = 1e-6) -> bool:
    """Grid membership agreement, ignoring grid values near a fast-path endpoint."""
    grid = np.asarray(grid, dtype=float)
    ends = np.asarray(fast.endpoints(), dtype=float)
    ok = np.ones(grid.size, dtype=bool)
    if ends.size:
        ok = np.min(np.abs(grid[:, None] - ends[None, :]), axis=1) > margin
    member = np.array([fast.contains(z) for z in grid])
    return bool(np.all(member[ok] == np.asarray(oracle_keep)[ok]))
