import numpy as np
import pytest

from smclimits import DiscreteHMM, random_likelihood_table
from smclimits.cli import DEFAULT_MASTER_SEED, DEFAULT_OBS_SEED


@pytest.fixture(scope="session")
def bench_model():
    """The pinned two-state benchmark model, horizon 5."""
    table = random_likelihood_table(5, 2, obs_seed=DEFAULT_OBS_SEED)
    return DiscreteHMM([0.5, 0.5], [[0.9, 0.1], [0.2, 0.8]], table)


@pytest.fixture(scope="session")
def master_seed():
    return DEFAULT_MASTER_SEED


@pytest.fixture
def rng():
    return np.random.default_rng(np.random.SeedSequence(12345))
