import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from semilt.paths import SeedSpec, TimeGrid, sample_brownian

settings.register_profile(
    "semilt",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("semilt")

SEED = 20120315


@pytest.fixture(scope="session")
def grid():
    return TimeGrid(1.0, 4096)


@pytest.fixture(scope="session")
def bm_batch(grid):
    """4096 Brownian paths on the default grid."""
    return sample_brownian(grid, SeedSpec(SEED, 0), 4096)


@pytest.fixture(scope="session")
def bm_small(grid):
    return sample_brownian(grid, SeedSpec(SEED, 0), 256)


def mean_se(a):
    a = np.asarray(a, dtype=float)
    return float(a.mean()), float(a.std(ddof=1) / np.sqrt(a.size))
