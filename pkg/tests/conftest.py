import numpy as np
import pytest

from ballu.actuator import ActuatorParams
from ballu.config import MorphologyConfig


@pytest.fixture(scope="session")
def config():
    return MorphologyConfig()


@pytest.fixture(scope="session")
def params():
    return ActuatorParams()


@pytest.fixture
def rng():
    return np.random.default_rng(0)
