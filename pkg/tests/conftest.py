import numpy as np
import pytest

from locus.dataset import SyntheticSpec, generate_synthetic


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture(scope="session")
def small_synthetic():
    return generate_synthetic(SyntheticSpec(n_samples=600, seed=3))
