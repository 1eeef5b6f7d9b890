import numpy as np
import pytest

from tests.simulators import NormalSimulator


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240917)


@pytest.fixture
def normal_sim() -> NormalSimulator:
    return NormalSimulator(d=2)


@pytest.fixture
def gaussian_samples(rng) -> np.ndarray:
    return rng.standard_normal((400, 2))


@pytest.fixture
def skewed_samples(rng) -> np.ndarray:
    return rng.gamma(shape=2.0, scale=1.0, size=(500, 2))
