import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fieldcast import _kernels_py
from fieldcast.splines import make_tensor_basis

try:
    from fieldcast import _kernels
    BACKENDS = [("compiled", _kernels), ("python", _kernels_py)]
except ImportError:
    _kernels = None
    BACKENDS = [("python", _kernels_py)]


@pytest.fixture(params=BACKENDS, ids=[name for name, _ in BACKENDS])
def kernel_backend(request, monkeypatch):
    """Run a test under each available kernel backend."""
    name, module = request.param
    from fieldcast import _backend

    monkeypatch.setattr(_backend, "kernels", module)
    return name


@pytest.fixture(scope="session")
def paper_basis():
    """The production-resolution tensor basis: 17 x 17 = 289 functions."""
    return make_tensor_basis(-124.0, -66.0, 24.0, 49.0, 13, 13)


@pytest.fixture(scope="session")
def small_basis():
    """A coarse basis for cheap end-to-end tests: 7 x 6 = 42 functions."""
    return make_tensor_basis(-124.0, -66.0, 24.0, 49.0, 3, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)
