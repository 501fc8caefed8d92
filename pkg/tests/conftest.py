import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from fedate.core import SiteDataset

settings.register_profile("default", deadline=None, max_examples=100,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@st.composite
def datasets(draw, max_n=12, max_domain=3, grid=None, min_n=1):
    size = draw(st.integers(1, max_domain))
    n = draw(st.integers(min_n, max_n))
    w = draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))
    if grid is None:
        ys = st.floats(0.0, 1.0, allow_nan=False)
    else:
        ys = st.sampled_from(grid)
    y = draw(st.lists(ys, min_size=n, max_size=n))
    x = draw(st.lists(st.integers(0, size - 1), min_size=n, max_size=n))
    return SiteDataset(np.array(w), np.array(y), np.array(x), B=1.0, domain_size=size)


@pytest.fixture
def pair():
    return SiteDataset.from_records([(1, 0.8, 0), (0, 0.2, 0)])


@pytest.fixture
def witness4():
    return SiteDataset.from_records([(1, 1.0, 0), (1, 1.0, 0), (1, 1.0, 0), (0, 0.0, 0)])
