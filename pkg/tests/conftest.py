import numpy as np
import pytest

from evhdr import _backend
from evhdr.event_core import EventStream


@pytest.fixture(params=_backend.available())
def backend(request):
    return _backend.get(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_stream(rng, n, geometry=(64, 48), t_max=1_000_000):
    w, h = geometry
    t = np.sort(rng.integers(0, t_max, n))
    return EventStream.from_columns(
        geometry, t, rng.integers(0, w, n), rng.integers(0, h, n), rng.choice([-1, 1], n)
    )
