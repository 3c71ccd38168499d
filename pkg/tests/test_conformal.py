import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conforma import (
    NCM,
    ConfidenceRegion,
    Dataset,
    EmptyRegion,
    InvalidAlpha,
    KernelParams,
    ResidualKind,
    ResidualLine,
    brute_force_membership,
    brute_force_region,
    conformal_p_value,
    conformal_region,
    crr_region,
    default_oracle_grid,
    gram,
    krr_fit,
    krr_predict,
    region_contains,
    region_hull_width,
    residual_line,
    residual_line_matrices,
    rrcm_region,
)
from conforma.conformal import coverage_profile, crr_profiles, regions_agree, rrcm_profile
from conforma.krr import regularized_gram

FAR = KernelParams(1e6)
INF = math.inf
ONE = Dataset([[0.0]], [1.0])
TWO = Dataset([[0.0], [2.0]], [1.0, -1.0])


def refit_residuals(train, xs, lam, params, kind, z):
    """Residuals of the augmented sample by explicit refitting."""
    X = np.vstack([train.inputs, np.atleast_1d(xs)[None, :]])
    y = np.append(train.targets, z)
    n = len(y)
    beta = np.linalg.solve(regularized_gram(X, lam, params), y)
    r_in = y - gram(params, X) @ beta
    if kind == "in_sample":
        return r_in
    out = []
    for i in range(n):
        keep = np.arange(n) != i
        sub = krr_fit(Dataset(X[keep], y[keep]), lam, params)
        out.append(y[i] - krr_predict(sub, X[i:i + 1])[0])
    return np.array(out)


def random_instance(rng, n=None, d=None):
    n = int(rng.integers(2, 16)) if n is None else n
    d = int(rng.choice([1, 2])) if d is None else d
    train = Dataset(rng.uniform(size=(n, d)), rng.standard_normal(n))
    return train, rng.uniform(size=d)


# --------------------------------------------------------------------------
# residual lines


def test_residual_line_hand_example():
    line = residual_line(ONE, [1.0], 1.0, FAR, "in_sample")
    np.testing.assert_allclose(line.c, [0.5, 0.0], atol=1e-15)
    np.testing.assert_allclose(line.b, [0.0, 0.5], atol=1e-15)


def test_residual_line_zero_targets(rng):
    train = Dataset(rng.uniform(size=(5, 1)), np.zeros(5))
    for kind in ResidualKind:
        assert np.all(residual_line(train, [0.3], 0.1, KernelParams(3.0), kind).c == 0.0)


@pytest.mark.parametrize("kind", ["in_sample", "loo"])
@pytest.mark.parametrize("seed", range(4))
def test_residual_line_matches_refit(kind, seed):
    rng = np.random.default_rng(seed)
    train, xs = random_instance(rng, n=6)
    lam, p = 0.1, KernelParams(5.0)
    line = residual_line(train, xs, lam, p, kind)
    for z in [0.0, 1.0, *rng.normal(scale=3, size=5)]:
        np.testing.assert_allclose(line.residuals(z), refit_residuals(train, xs, lam, p, kind, z),
                                   rtol=1e-8, atol=1e-12)


@pytest.mark.parametrize("kind", ["in_sample", "loo"])
@pytest.mark.parametrize("lam", [1e-3, 1e-1])
def test_block_formula_path_matches_augmented_solve(rng, kind, lam):
    train = Dataset(rng.uniform(size=(12, 2)), rng.standard_normal(12))
    p = KernelParams(4.0)
    Xs = rng.uniform(size=(5, 2))
    C, B = residual_line_matrices(krr_fit(train, lam, p), Xs, kind)
    for j, xs in enumerate(Xs):
        line = residual_line(train, xs, lam, p, kind)
        np.testing.assert_allclose(C[:, j], line.c, rtol=1e-8, atol=1e-10)
        np.testing.assert_allclose(B[:, j], line.b, rtol=1e-8, atol=1e-10)


def test_printed_block_formulas(rng):
    # B = (-Q k, 1) / m and C = (Q y, 0) - B * (k' Q y), with Q the training inverse
    train = Dataset(rng.uniform(size=(8, 1)), rng.standard_normal(8))
    lam, p, xs = 0.05, KernelParams(6.0), np.array([0.4])
    Q = np.linalg.inv(regularized_gram(train.inputs, lam, p))
    k = np.exp(-p.theta * (train.inputs[:, 0] - xs[0]) ** 2)
    m = lam + 1.0 - k @ Q @ k
    B = np.append(-Q @ k, 1.0) / m
    C = np.append(Q @ train.targets, 0.0) - B * (k @ Q @ train.targets)
    line = residual_line(train, xs, lam, p)
    np.testing.assert_allclose(line.b, B, rtol=1e-8)
    np.testing.assert_allclose(line.c, C, rtol=1e-8)


# --------------------------------------------------------------------------
# regions


def test_rrcm_hand_examples():
    line = ResidualLine([0.5, 0.0], [0.0, 0.5], "in_sample", 1.0)
    assert rrcm_region(line, 0.6).components == ((-1.0, 1.0),)
    assert rrcm_region(line, 0.5).components == ((-INF, INF),)


def test_crr_hand_examples():
    line = residual_line(TWO, [4.0], 1.0, FAR)
    np.testing.assert_allclose(line.residuals(2.0), [0.5, -0.5, 1.0], atol=1e-15)
    assert crr_region(line, 1.0).components == ((-1.0, 1.0),)
    assert crr_region(line, 2 / 3).components == ((-INF, INF),)


@pytest.mark.parametrize("seed", range(10))
def test_small_alpha_gives_real_line(seed):
    rng = np.random.default_rng(seed)
    train, xs = random_instance(rng)
    n = len(train)
    line = residual_line(train, xs, 0.1, KernelParams(10.0))
    assert rrcm_region(line, 1 / (n + 1)) == ConfidenceRegion.real_line()
    assert crr_region(line, 2 / (n + 1)) == ConfidenceRegion.real_line()


def test_invalid_alpha():
    line = ResidualLine([0.5, 0.0], [0.0, 0.5], "in_sample", 1.0)
    for fn in (rrcm_region, crr_region):
        for a in (0.0, -0.2, 1.5):
            with pytest.raises(InvalidAlpha):
                fn(line, a)


def test_p_value_examples():
    line = residual_line(TWO, [4.0], 1.0, FAR)
    assert conformal_p_value(line, 0.0, "rrcm") == (3, 3)
    assert float(conformal_p_value(line, 0.0, "rrcm")) == 1.0
    # test residual strictly largest in magnitude
    assert conformal_p_value(line, 10.0, "rrcm") == (1, 3)
    assert conformal_p_value(line, 10.0, "crr_upper") == (1, 3)
    assert conformal_p_value(line, 10.0, "crr_lower") == (3, 3)


@pytest.mark.parametrize("seed", range(5))
def test_p_value_piecewise_constant(seed):
    rng = np.random.default_rng(seed)
    train, xs = random_instance(rng)
    line = residual_line(train, xs, 0.1, KernelParams(10.0))
    prof = rrcm_profile(line)
    ends = np.concatenate([[-1e6], prof.points, [1e6]])
    for lo, hi in zip(ends[:-1], ends[1:]):
        zs = np.linspace(lo, hi, 7)[1:-1]
        vals = {conformal_p_value(line, z) for z in zs}
        assert len(vals) == 1


def test_region_contains_and_width():
    r = ConfidenceRegion([(-1.0, 1.0)])
    assert region_contains(r, 1.0) and region_contains(r, -1.0)
    assert region_contains(ConfidenceRegion.real_line(), 123.4)
    r2 = ConfidenceRegion([(-1.0, 0.0), (2.0, 2.0)])
    assert not region_contains(r2, 1.0) and region_contains(r2, 2.0)
    assert region_hull_width(r) == 2.0
    assert region_hull_width(r2) == 3.0
    assert region_hull_width(ConfidenceRegion([(-INF, 0.0)])) == INF
    with pytest.raises(EmptyRegion):
        region_hull_width(ConfidenceRegion())


def test_region_normalization_and_format():
    r = ConfidenceRegion([(2.0, 3.0), (-1.0, 0.0), (0.0, 0.5), (5.0, 5.0)])
    assert r.components == ((-1.0, 0.5), (2.0, 3.0), (5.0, 5.0))
    assert r.singletons == [5.0]
    assert str(r) == "[-1.000000, 0.500000] U [2.000000, 3.000000] U {5.000000}"
    assert str(ConfidenceRegion([(-INF, INF)])) == "(-inf, inf)"
    assert str(ConfidenceRegion()) == "empty"


def test_empty_region_when_no_cell_reaches_level():
    prof = coverage_profile(np.array([0.0, 2.0]), np.array([1.0, 3.0]), total=4)
    assert prof.region(1.0).is_empty
    assert prof.region(0.5).components == ((0.0, 1.0), (2.0, 3.0))


def test_isolated_singleton_kept():
    # two closed rays touching at one point overlap only there
    prof = coverage_profile(np.array([-INF, 1.0]), np.array([1.0, INF]), total=3)
    assert prof.region(1.0).components == ((1.0, 1.0),)


# --------------------------------------------------------------------------
# brute-force oracle


def test_brute_force_hand_example():
    grid = np.round(np.arange(-5000, 5001) * 0.001, 12)
    r = brute_force_region(ONE, [1.0], 1.0, FAR, "in_sample", "rrcm", 0.6, grid)
    assert len(r) == 1
    lo, hi = r.components[0]
    assert abs(lo + 1) <= 1e-3 and abs(hi - 1) <= 1e-3


def test_brute_force_small_alpha_keeps_everything(rng):
    train, xs = random_instance(rng, n=4)
    grid = default_oracle_grid(train, xs, 0.1, KernelParams(10.0))
    keep = brute_force_membership(train, xs, 0.1, KernelParams(10.0), "loo", "rrcm", 0.2, grid)
    assert keep.all() and grid.size == 2001


@pytest.mark.parametrize("seed", range(40))
def test_oracle_equivalence(seed):
    rng = np.random.default_rng(1000 + seed)
    train, xs = random_instance(rng)
    lam = float(rng.choice([1e-6, 1e-1]))
    p = KernelParams(float(rng.choice([1.0, 10.0, 100.0])))
    alpha = float(rng.choice([0.05, 0.1, 0.25, 0.5]))
    for kind in ResidualKind:
        line = residual_line(train, xs, lam, p, kind)
        grid = default_oracle_grid(train, xs, lam, p)
        for ncm in ("rrcm", "crr"):
            fast = conformal_region(line, alpha, ncm)
            keep = brute_force_membership(train, xs, lam, p, kind, ncm, alpha, grid)
            assert regions_agree(fast, grid, keep)


# --------------------------------------------------------------------------
# structural properties


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), a1=st.floats(0.01, 1.0), a2=st.floats(0.01, 1.0),
       ncm=st.sampled_from(["rrcm", "crr"]), kind=st.sampled_from(["in_sample", "loo"]))
def test_nesting(seed, a1, a2, ncm, kind):
    a1, a2 = sorted((a1, a2))
    train, xs = random_instance(np.random.default_rng(seed))
    line = residual_line(train, xs, 0.1, KernelParams(10.0), kind)
    assert conformal_region(line, a2, ncm).issubset(conformal_region(line, a1, ncm))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), alpha=st.floats(0.01, 1.0),
       kind=st.sampled_from(["in_sample", "loo"]))
def test_crr_is_intersection_of_one_sided_regions(seed, alpha, kind):
    train, xs = random_instance(np.random.default_rng(seed))
    line = residual_line(train, xs, 0.1, KernelParams(10.0), kind)
    upper = conformal_region(line, alpha / 2, NCM.CRR_UPPER)
    lower = conformal_region(line, alpha / 2, NCM.CRR_LOWER)
    assert crr_region(line, alpha) == upper & lower


@pytest.mark.parametrize("seed", range(30))
def test_prediction_in_region(seed):
    rng = np.random.default_rng(seed)
    train, xs = random_instance(rng)
    lam, p = float(rng.choice([1e-6, 1e-1])), KernelParams(float(rng.choice([1.0, 10.0, 100.0])))
    yhat = krr_predict(krr_fit(train, lam, p), xs[None, :])[0]
    for kind in ResidualKind:
        line = residual_line(train, xs, lam, p, kind)
        # at z = yhat the test residual vanishes, so the RRCM p-value is 1
        assert rrcm_region(line, 1.0).contains(yhat) or abs(line.c[-1] + line.b[-1] * yhat) < 1e-9
        for alpha in (0.05, 0.1, 0.25, 0.5):
            assert rrcm_region(line, alpha).contains(yhat)
            assert crr_region(line, alpha).contains(yhat)


def test_far_point_limit(rng):
    train = Dataset(rng.uniform(size=(9, 1)), rng.standard_normal(9))
    lam, p = 0.1, KernelParams(100.0)
    model = krr_fit(train, lam, p)
    for kind in ResidualKind:
        a = residual_line(train, [50.0], lam, p, kind)
        b = residual_line(train, [-80.0], lam, p, kind)
        for alpha in (0.1, 0.25, 0.5):
            for ncm in ("rrcm", "crr"):
                assert conformal_region(a, alpha, ncm) == conformal_region(b, alpha, ncm)
    # in-sample: S_i = [-|q_i|, |q_i|] with |q_i| = (lam + 1) |(Q y)_i|
    line = residual_line(train, [50.0], lam, p)
    q = np.sort(np.abs((lam + 1.0) * model.beta))[::-1]
    n = len(train)
    for alpha in (0.1, 0.25, 0.5):
        need = math.ceil((n + 1) * alpha - 1e-9) - 1  # training sets that must cover z
        r = rrcm_region(line, alpha)
        if need <= 0:
            assert r == ConfidenceRegion.real_line()
        else:
            t = q[need - 1]
            assert len(r) == 1 and r.components[0] == pytest.approx((-t, t), rel=1e-12)


@pytest.mark.parametrize("seed", range(15))
def test_sweep_counts_match_direct_counting(seed):
    rng = np.random.default_rng(seed)
    train, xs = random_instance(rng, n=int(rng.integers(2, 16)))
    line = residual_line(train, xs, float(rng.choice([1e-6, 0.1])), KernelParams(10.0),
                         rng.choice(["in_sample", "loo"]))
    upper, lower = crr_profiles(line)
    for prof, ncm in ((rrcm_profile(line), "rrcm"), (upper, "crr_upper"), (lower, "crr_lower")):
        g = prof.points
        cells = np.concatenate([[g[0] - 1.0] if g.size else [0.0], (g[:-1] + g[1:]) / 2,
                                [g[-1] + 1.0] if g.size else []])
        for j, z in enumerate(cells):
            assert prof.counts[2 * j] == conformal_p_value(line, z, ncm).count
            assert prof.count_at(z) == prof.counts[2 * j]
        for j, z in enumerate(g):
            # endpoints are exact ties; the closed count is the max of nearby direct counts
            assert prof.counts[2 * j + 1] >= max(prof.counts[2 * j], prof.counts[2 * j + 2])


def _nearly_parallel_instance():
    # instance where a training row and the test row have almost equal
    # residual slopes; found by replaying a random search with seed 0
    rng = np.random.default_rng(0)
    for _ in range(187):
        n = int(rng.integers(2, 16))
        d = int(rng.choice([1, 2]))
        lam = float(rng.choice([1e-6, 1e-1]))
        theta = float(rng.choice([1.0, 10.0, 100.0]))
        alpha = float(rng.choice([0.05, 0.1, 0.25, 0.5]))
        X, y, xs = rng.uniform(size=(n, d)), rng.standard_normal(n), rng.uniform(size=d)
    return Dataset(X, y), xs, lam, KernelParams(theta), alpha


def test_oracle_ill_conditioned_agreement():
    train, xs, lam, p, alpha = _nearly_parallel_instance()
    assert lam == 1e-6 and p.theta == 100.0
    grid = default_oracle_grid(train, xs, lam, p)
    keep = brute_force_membership(train, xs, lam, p, "in_sample", "rrcm", alpha, grid)
    fast = conformal_region(residual_line(train, xs, lam, p, "in_sample"), alpha, "rrcm")
    assert regions_agree(fast, grid, keep)


def test_fast_endpoint_against_high_precision():
    mp = pytest.importorskip("mpmath")
    mp.mp.dps = 50
    train, xs, lam, p, alpha = _nearly_parallel_instance()
    fast = conformal_region(residual_line(train, xs, lam, p, "in_sample"), alpha, "rrcm")
    hi = fast.components[-1][1]
    Xa = np.vstack([train.inputs, xs])
    N = Xa.shape[0]
    K = mp.matrix(N, N)
    for i in range(N):
        for j in range(N):
            K[i, j] = mp.exp(-p.theta * mp.fsum((mp.mpf(a) - mp.mpf(b)) ** 2
                                                for a, b in zip(Xa[i], Xa[j])))
    A = K + lam * mp.eye(N)

    def count(z):
        beta = mp.lu_solve(A, mp.matrix([mp.mpf(v) for v in train.targets] + [mp.mpf(z)]))
        r = [abs(beta[i]) for i in range(N)]
        return sum(1 for v in r if v >= r[-1])

    need = math.ceil(N * alpha - 1e-9)
    assert count(hi - 1e-9) >= need > count(hi + 1e-9)
