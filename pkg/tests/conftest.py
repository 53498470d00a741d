import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def sym_arrays(min_n=1, max_n=6, bound=10.0):
    """Hypothesis strategy for square float arrays (symmetrized by the caller)."""
    elems = st.floats(-bound, bound, allow_nan=False, allow_infinity=False, width=64)
    return st.integers(min_n, max_n).flatmap(lambda n: arrays(np.float64, (n, n), elements=elems))


def psd_arrays(min_n=1, max_n=6):
    return sym_arrays(min_n, max_n, 3.0).map(lambda g: g @ g.T)


@pytest.fixture
def gen():
    return np.random.default_rng(12345)
