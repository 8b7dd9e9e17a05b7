import numpy as np
import pytest
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays


def simplex_rows(rng, n, m, floor=0.0):
    a = rng.dirichlet(np.ones(m), size=n) + floor
    return a / a.sum(axis=1, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def simplex_vectors(min_size=2, max_size=6):
    """Hypothesis strategy for points on the probability simplex."""
    def build(raw):
        v = np.asarray(raw) + 1e-3
        return v / v.sum()
    return st.integers(min_size, max_size).flatmap(
        lambda m: arrays(float, m, elements=st.floats(0, 1, allow_nan=False)).map(build))
