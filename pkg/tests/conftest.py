import numpy as np
import pytest

import sgr
from sgr.primitives import icosphere


@pytest.fixture(scope="session")
def ico2():
    return icosphere(2)


@pytest.fixture(scope="session")
def ico3():
    return icosphere(3)


@pytest.fixture(scope="session")
def ico2_embedding(ico2):
    embedding, stats = sgr.parameterize(ico2, sgr.ParamConfig())
    return embedding, stats


@pytest.fixture(scope="session")
def ico3_param_trace(ico3):
    embedding, stats = sgr.parameterize(ico3, sgr.ParamConfig(), collect_trace=True)
    return embedding, stats


@pytest.fixture
def rng():
    return np.random.default_rng(0)
