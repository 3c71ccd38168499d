import math

import numpy as np
import pytest

from conforma import (
    Dataset,
    DimensionMismatch,
    KernelParams,
    NotPositiveDefinite,
    cholesky_factorize,
    cross_gram,
    eval_kernel,
    gram,
)


def test_eval_kernel_values():
    assert eval_kernel(KernelParams(3.7), [0.2, 0.4], [0.2, 0.4]) == 1.0
    assert eval_kernel(KernelParams(10.0), 0.0, 0.1) == pytest.approx(0.90483742, abs=1e-8)
    assert eval_kernel(KernelParams(1e6), 0.0, 1.0) == 0.0


def test_eval_kernel_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        eval_kernel(KernelParams(1.0), [0.0, 1.0], [0.0])


def test_kernel_params_validation():
    for bad in (0.0, -1.0, math.inf, math.nan):
        with pytest.raises(ValueError):
            KernelParams(bad)


def test_gram_examples():
    assert gram(KernelParams(2.0), [[0.3]]).tolist() == [[1.0]]
    np.testing.assert_allclose(gram(KernelParams(math.log(2)), [0.0, 1.0]),
                               [[1.0, 0.5], [0.5, 1.0]], atol=1e-15)
    np.testing.assert_array_equal(gram(KernelParams(1e6), [0.0, 1.0, 2.0]), np.eye(3))


def test_cross_gram_examples():
    p = KernelParams(10.0)
    X = np.random.default_rng(3).uniform(size=(6, 2))
    np.testing.assert_array_equal(cross_gram(p, X, X), gram(p, X))
    np.testing.assert_allclose(cross_gram(p, [0.0], [0.1]), [[0.90483742]], atol=1e-8)
    np.testing.assert_array_equal(cross_gram(KernelParams(1e6), [0.0, 1.0], [2.0]), [[0.0], [0.0]])


def test_cross_gram_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        cross_gram(KernelParams(1.0), np.zeros((2, 2)), np.zeros((3, 1)))


@pytest.mark.parametrize("seed", range(10))
def test_gram_symmetric_unit_diagonal_psd(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 21))
    X = rng.uniform(-1, 1, size=(n, int(rng.integers(1, 4))))
    K = gram(KernelParams(float(rng.choice([0.1, 1.0, 10.0, 100.0]))), X)
    assert np.array_equal(K, K.T)
    assert np.all(np.diag(K) == 1.0)
    try:
        cholesky_factorize(K + 1e-10 * np.eye(n))
    except NotPositiveDefinite:  # pragma: no cover
        pytest.fail("Gram matrix plus 1e-10 I should factorize")


def test_kernel_monotone_in_distance():
    p = KernelParams(5.0)
    vals = [eval_kernel(p, 0.0, r) for r in np.linspace(0, 1, 50)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_dataset_validation():
    with pytest.raises(DimensionMismatch):
        Dataset([[0.0], [1.0]], [1.0])
    d = Dataset([0.0, 1.0, 2.0], [1.0, 2.0, 3.0])
    assert d.inputs.shape == (3, 1) and len(d) == 3
