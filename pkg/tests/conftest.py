import logging

import numpy as np
import pytest

from varadapt import kernels
from varadapt.generator import init_generator
from varadapt.world import build_world, default_domains, default_world


@pytest.fixture(params=kernels.available())
def backend(request):
    """Run a test once per available kernel backend."""
    before = kernels.BACKEND
    kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend(before)


@pytest.fixture(scope="session")
def world():
    return default_world()


@pytest.fixture(scope="session")
def tiny_world():
    return build_world(3, 3, 4, 5, default_domains(3, 3))


@pytest.fixture(scope="session")
def tiny_gen():
    return init_generator(1, 3, Dw=3, hidden=(4, 4))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _quiet_logs(caplog):
    caplog.set_level(logging.WARNING)
    yield
