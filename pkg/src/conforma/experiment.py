"""Batch-setting coverage experiments for Bayesian and conformal KRR regions.

Protocol: a fixed regular test grid, a uniform pool of training inputs,
targets generated once for pool and test points, then ``replications``
independent rounds of subsample, fit, build regions at every test point, and
record coverage and hull widths.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .conformal import (
    NCM,
    ResidualKind,
    ResidualLine,
    crr_profiles,
    residual_line_matrices,
    rrcm_profile,
)
from .errors import ConformaError, MissingLevel, NotPositiveDefinite, UnknownFunction
from .gpr import DEFAULT_THETA_GRID, SIGMA2_FLOOR, mle_theta, posterior_moments, std_normal_quantile
from .kernel import Dataset, KernelParams, as_point, as_points, gram
from .krr import krr_fit
from .linalg import cholesky_factorize

log = logging.getLogger(__name__)

JITTERS = (1e-10, 1e-8, 1e-6)
#: signal variance of generated GP paths
GEN_SIGMA2 = 1.0
MIN_VALID_FRACTION = 0.9
WIDTH_STATS = ("min", "p05", "median", "max")


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def stream(seed: int, index: int) -> np.random.Generator:
    """Independent generator for a sub-task: 0 for data, ``l`` for replication ``l``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index),)))


def sample_gp_path(X, theta: float, gamma: float, sigma2: float = GEN_SIGMA2,
                   seed=0) -> np.ndarray:
    """Draw ``y ~ N(0, sigma2 * (K + gamma I))`` at the rows of ``X``.

    Diagonal jitter of 1e-10, 1e-8 and 1e-6 is tried in turn before giving up.
    """
    if gamma < 0:
        raise ValueError(f"gamma must be nonnegative, got {gamma!r}")
    X = as_points(X)
    K = gram(KernelParams(theta), X)
    rng = _as_rng(seed)
    eps = rng.standard_normal(X.shape[0])
    for jitter in JITTERS:
        A = K.copy()
        A[np.diag_indices_from(A)] += gamma + jitter
        try:
            F = cholesky_factorize(A)
        except NotPositiveDefinite:
            log.debug("GP covariance not PD with jitter %g", jitter)
            continue
        return math.sqrt(sigma2) * (F.lower @ eps)
    raise NotPositiveDefinite(f"GP covariance not positive definite with jitter {JITTERS[-1]}")


def _heaviside(X: np.ndarray) -> np.ndarray:
    if X.shape[1] != 1:
        raise ValueError("heaviside is defined on 1-d inputs")
    return (X[:, 0] >= 0.5).astype(float)


def _f2(X: np.ndarray) -> np.ndarray:
    if X.shape[1] != 2:
        raise ValueError("f2 is defined on 2-d inputs")
    return np.sin(np.pi * X[:, 0]) * np.sign(X[:, 1])


TEST_FUNCTIONS = {"heaviside": _heaviside, "f2": _f2}


def evaluate_function(name: str, X) -> np.ndarray:
    try:
        fn = TEST_FUNCTIONS[name]
    except KeyError:
        raise UnknownFunction(name) from None
    return fn(as_points(X))


def test_function(name: str, x) -> float:
    """Deterministic non-Gaussian targets.

    ``heaviside``: 1 for ``x >= 0.5`` else 0, on [0, 1].
    ``f2``: ``sin(pi x1) * sign(x2)`` on [-1, 1]^2, discontinuous along ``x2 = 0``.
    """
    return float(evaluate_function(name, as_point(x)[None, :])[0])


test_function.__test__ = False  # not a pytest test


# --------------------------------------------------------------------------
# configuration and results


@dataclass(frozen=True)
class ExperimentConfig:
    dimension: int = 1
    test_function: str = "gp_path"
    gamma: float = 1e-6
    theta_gen: float = 100.0
    theta_fit: Union[float, str] = "mle"
    lam: float = 1e-6
    n_train: int = 100
    n_pool: Optional[int] = None
    replications: int = 50
    alpha_grid: tuple = (0.01, 0.05, 0.1, 0.25)
    ncm: tuple = ("rrcm", "crr")
    residual_kind: tuple = ("in_sample", "loo")
    seed: int = 0
    theta_grid: tuple = DEFAULT_THETA_GRID
    test_grid_size: Optional[int] = None

    def __post_init__(self):
        def tup(v):
            return (v,) if isinstance(v, (str, float, int)) else tuple(v)

        object.__setattr__(self, "alpha_grid", tuple(float(a) for a in tup(self.alpha_grid)))
        object.__setattr__(self, "ncm", tuple(NCM(v).value for v in tup(self.ncm)))
        object.__setattr__(self, "residual_kind",
                           tuple(ResidualKind(v).value for v in tup(self.residual_kind)))
        object.__setattr__(self, "theta_grid", tuple(float(t) for t in tup(self.theta_grid)))
        if self.n_pool is None:
            object.__setattr__(self, "n_pool", max(1000, int(self.n_train)))
        if self.test_grid_size is None:
            object.__setattr__(self, "test_grid_size", 101 if self.dimension == 1 else 21)
        self.validate()

    def validate(self):
        if self.dimension not in (1, 2):
            raise ValueError("dimension must be 1 or 2")
        if self.test_function not in ("gp_path", *TEST_FUNCTIONS):
            raise UnknownFunction(self.test_function)
        if self.test_function == "heaviside" and self.dimension != 1:
            raise ValueError("heaviside needs dimension 1")
        if self.test_function == "f2" and self.dimension != 2:
            raise ValueError("f2 needs dimension 2")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if not (self.theta_gen > 0 and self.lam > 0):
            raise ValueError("theta_gen and lambda must be positive")
        if self.theta_fit != "mle" and not float(self.theta_fit) > 0:
            raise ValueError("theta_fit must be 'mle' or a positive number")
        if not 1 <= self.n_train <= self.n_pool:
            raise ValueError("need 1 <= n_train <= n_pool")
        if self.replications < 1 or self.test_grid_size < 2:
            raise ValueError("replications >= 1 and test_grid_size >= 2 required")
        if not self.alpha_grid or any(not 0 < a < 1 for a in self.alpha_grid):
            raise ValueError("alpha_grid must be a nonempty subset of (0, 1)")
        if NCM.CRR_UPPER.value in self.ncm or NCM.CRR_LOWER.value in self.ncm:
            raise ValueError("experiment ncm must be rrcm or crr")

    @property
    def methods(self) -> tuple:
        names = ["gpr"]
        for ncm in self.ncm:
            for kind in self.residual_kind:
                names.append(method_name(ncm, kind))
        return tuple(names)


def method_name(ncm, kind) -> str:
    ncm, kind = NCM(ncm), ResidualKind(kind)
    return ncm.value + ("-loo" if kind is ResidualKind.LOO else "")


@dataclass
class ExperimentResult:
    """Per-replication coverage and width summaries.

    ``coverage`` has shape ``(L, methods, alphas)``; ``widths`` adds a last
    axis over ``WIDTH_STATS``. Skipped replications hold NaN.
    """

    config: ExperimentConfig
    methods: tuple
    coverage: np.ndarray
    widths: np.ndarray
    skipped: list = field(default_factory=list)
    theta_used: np.ndarray = None

    @property
    def n_valid(self) -> int:
        return self.coverage.shape[0] - len(self.skipped)

    @property
    def valid(self) -> bool:
        return self.n_valid >= MIN_VALID_FRACTION * self.config.replications

    def error_rates(self, method: str) -> dict:
        k = self.methods.index(method)
        ok = np.setdiff1d(np.arange(self.coverage.shape[0]), self.skipped)
        mean_cov = self.coverage[ok, k, :].mean(axis=0)
        return {a: float(1.0 - c) for a, c in zip(self.config.alpha_grid, mean_cov)}

    def mad(self, method: str, levels: Optional[Sequence[float]] = None) -> float:
        rates = self.error_rates(method)
        return mad(rates, self.config.alpha_grid if levels is None else levels)


# --------------------------------------------------------------------------
# metrics


def coverage_and_width(regions, truths):
    """Coverage rate and width summary over test points.

    ``regions`` are :class:`~conforma.region.ConfidenceRegion` objects (or
    anything with ``contains`` and ``hull_width``). Returns ``(p, widths)``
    where ``widths`` maps ``min``/``p05``/``median``/``max`` to hull widths.
    """
    regions = list(regions)
    truths = np.asarray(truths, dtype=float).reshape(-1)
    if len(regions) != truths.size:
        from .errors import DimensionMismatch

        raise DimensionMismatch(f"{len(regions)} regions, {truths.size} truths")
    hits = np.array([r.contains(t) for r, t in zip(regions, truths)])
    w = np.array([r.hull_width() if r else 0.0 for r in regions])
    return float(hits.mean()), dict(zip(WIDTH_STATS, summarize_widths(w)))


def summarize_widths(w: np.ndarray) -> np.ndarray:
    # order-statistic quantiles: interpolation would turn inf - inf into nan
    return np.array([
        w.min(),
        np.quantile(w, 0.05, method="inverted_cdf"),
        np.quantile(w, 0.5, method="inverted_cdf"),
        w.max(),
    ])


def mad(error_rates: Mapping[float, float], levels: Sequence[float]) -> float:
    """Largest absolute gap between empirical error rate and nominal level."""
    dev = []
    for a in levels:
        match = [k for k in error_rates if math.isclose(k, a, rel_tol=1e-9, abs_tol=1e-12)]
        if not match:
            raise MissingLevel(a)
        dev.append(abs(error_rates[match[0]] - a))
    return max(dev)


# --------------------------------------------------------------------------
# runner


def test_grid(dimension: int, size: int) -> np.ndarray:
    """Regular grid: ``size`` knots on [0, 1], or ``size x size`` on [-1, 1]^2."""
    if dimension == 1:
        return np.linspace(0.0, 1.0, size)[:, None]
    ax = np.linspace(-1.0, 1.0, size)
    g1, g2 = np.meshgrid(ax, ax, indexing="ij")
    return np.column_stack([g1.ravel(), g2.ravel()])


test_grid.__test__ = False


def generate_data(cfg: ExperimentConfig):
    """Pool inputs, test grid, and their targets (shared by all replications)."""
    rng = stream(cfg.seed, 0)
    X_test = test_grid(cfg.dimension, cfg.test_grid_size)
    if cfg.dimension == 1:
        X_pool = rng.uniform(0.0, 1.0, size=(cfg.n_pool, 1))
    else:
        X_pool = rng.uniform(-1.0, 1.0, size=(cfg.n_pool, 2))
    X_all = np.vstack([X_pool, X_test])
    if cfg.test_function == "gp_path":
        y_all = sample_gp_path(X_all, cfg.theta_gen, cfg.gamma, GEN_SIGMA2, rng)
    else:
        noise = math.sqrt(cfg.gamma) * rng.standard_normal(X_all.shape[0])
        y_all = evaluate_function(cfg.test_function, X_all) + noise
    return X_pool, y_all[: cfg.n_pool], X_test, y_all[cfg.n_pool:]


def _conformal_stats(C, B, kind, lam, y_test, ncm, alphas):
    n_test = y_test.size
    cov = np.zeros((len(alphas), n_test), dtype=bool)
    wid = np.zeros((len(alphas), n_test))
    for j in range(n_test):
        line = ResidualLine(C[:, j], B[:, j], kind, lam)
        if ncm == NCM.RRCM.value:
            prof = rrcm_profile(line)
            regions = [prof.region(a) for a in alphas]
        else:
            upper, lower = crr_profiles(line)
            regions = [upper.region(a / 2) & lower.region(a / 2) for a in alphas]
        for k, r in enumerate(regions):
            cov[k, j] = r.contains(y_test[j])
            wid[k, j] = r.hull_width() if r else 0.0
    return cov, wid


def run_replication(cfg: ExperimentConfig, l: int, X_pool, y_pool, X_test, y_test):
    """One subsample-fit-evaluate round; returns ``(coverage, widths, theta)``."""
    rng = stream(cfg.seed, l)
    idx = rng.choice(cfg.n_pool, size=cfg.n_train, replace=False)
    data = Dataset(X_pool[idx], y_pool[idx])
    if cfg.theta_fit == "mle":
        theta = mle_theta(data, cfg.lam, cfg.theta_grid).theta_hat
    else:
        theta = float(cfg.theta_fit)
    model = krr_fit(data, cfg.lam, KernelParams(theta))
    sigma2 = max(float(data.targets @ model.beta) / len(data), SIGMA2_FLOOR)

    alphas = cfg.alpha_grid
    methods = cfg.methods
    coverage = np.zeros((len(methods), len(alphas)))
    widths = np.zeros((len(methods), len(alphas), len(WIDTH_STATS)))

    mean, var = posterior_moments(model, X_test, sigma2)
    for k, a in enumerate(alphas):
        half = std_normal_quantile(1.0 - a / 2.0) * np.sqrt(var)
        coverage[0, k] = np.mean(np.abs(y_test - mean) <= half)
        widths[0, k] = summarize_widths(2.0 * half)

    for kind in cfg.residual_kind:
        C, B = residual_line_matrices(model, X_test, kind)
        for ncm in cfg.ncm:
            m = methods.index(method_name(ncm, kind))
            cov, wid = _conformal_stats(C, B, kind, cfg.lam, y_test, ncm, alphas)
            coverage[m] = cov.mean(axis=1)
            widths[m] = np.array([summarize_widths(w) for w in wid])
    return coverage, widths, theta


def _replication_task(args):
    cfg, l, data = args
    try:
        return run_replication(cfg, l, *data)
    except (ConformaError, np.linalg.LinAlgError, FloatingPointError) as exc:
        log.warning("replication %d skipped: %s", l, exc)
        return None


def worker_count() -> int:
    """Workers allowed by ``CONFORMA_THREADS`` (unset: 1; 0: all cores)."""
    raw = os.environ.get("CONFORMA_THREADS", "").strip()
    if not raw:
        return 1
    n = int(raw)
    return os.cpu_count() or 1 if n == 0 else max(1, n)


def run_experiment(cfg: ExperimentConfig, workers: Optional[int] = None) -> ExperimentResult:
    """Run all replications; deterministic for a given config and seed.

    Replication ``l`` draws from its own seed stream, so its outcome does not
    depend on ``replications`` or on the worker count.
    """
    data = generate_data(cfg)
    workers = worker_count() if workers is None else workers
    tasks = [(cfg, l, data) for l in range(1, cfg.replications + 1)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(_replication_task, tasks))
    else:
        outs = [_replication_task(t) for t in tasks]

    L, M, A = cfg.replications, len(cfg.methods), len(cfg.alpha_grid)
    coverage = np.full((L, M, A), np.nan)
    widths = np.full((L, M, A, len(WIDTH_STATS)), np.nan)
    thetas = np.full(L, np.nan)
    skipped = []
    for i, out in enumerate(outs):
        if out is None:
            skipped.append(i)
            continue
        coverage[i], widths[i], thetas[i] = out
    return ExperimentResult(cfg, cfg.methods, coverage, widths, skipped, thetas)
