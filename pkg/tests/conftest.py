import numpy as np
import pytest

from cascade_tails._rng import stream


@pytest.fixture
def rng():
    return stream(12345)


def mc_close(values, target, k=4.0):
    """|mean - target| within k standard errors."""
    values = np.asarray(values, dtype=float)
    se = values.std(ddof=1) / np.sqrt(values.size)
    return abs(values.mean() - target) <= k * se
