import numpy as np
import pytest

from cfjoin import cf_engine


@pytest.fixture(scope="session")
def levels():
    """Default construction, fixed seed, shared across the suite."""
    return cf_engine.build_levels(cf_engine.default_params(), seed=42)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
