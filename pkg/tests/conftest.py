import numpy as np
import pytest

from conforma import Dataset


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_dataset(rng, n, d=1, scale=1.0):
    X = rng.uniform(0.0, scale, size=(n, d))
    y = rng.standard_normal(n)
    return Dataset(X, y)
