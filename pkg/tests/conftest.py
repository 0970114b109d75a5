import numpy as np
import pytest

from abcforest.data import ReferenceTable


def make_table(models, summaries, names=None, params=None, param_names=None):
    summaries = np.asarray(summaries, dtype=np.float64)
    if names is None:
        names = [f"s{j}" for j in range(summaries.shape[1])]
    return ReferenceTable(np.asarray(models, dtype=np.int64), summaries, names,
                          params, param_names)


@pytest.fixture
def separable_table():
    """Two classes split by the first summary with a hard margin of 1."""
    rng = np.random.default_rng(8)
    n = 400
    y = np.repeat([1, 2], n // 2)
    x = rng.standard_normal((n, 3))
    x[:, 0] = np.where(y == 1, -0.5, 0.5) * (1.0 + np.abs(x[:, 0]))
    return make_table(y, x)


@pytest.fixture
def noise_table():
    """Labels carry no signal at all."""
    rng = np.random.default_rng(9)
    n = 5000
    return make_table(rng.integers(1, 3, n), rng.standard_normal((n, 4)))
