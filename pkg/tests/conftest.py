import numpy as np
import pytest

from svrconf import _accel


@pytest.fixture(params=["numba", "numpy"])
def backend(request):
    prev = _accel.backend()
    if request.param == "numba" and not _accel.HAVE_NUMBA:
        pytest.skip("numba not installed")
    _accel.set_backend(request.param)
    yield request.param
    _accel.set_backend(prev)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
