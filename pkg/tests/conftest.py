import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from passgp import backend


@pytest.fixture(params=["numpy", "numba"])
def each_backend(request):
    """Run a test under both compute backends."""
    backend.set_backend(request.param)
    yield request.param
    backend.set_backend(None)


@pytest.fixture
def numpy_backend():
    backend.set_backend("numpy")
    yield
    backend.set_backend(None)
