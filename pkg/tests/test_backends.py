import numpy as np
import pytest

from evhdr import _backend
from evhdr.esim import SimConfig, simulate_log_frames
from evhdr.event_core import EventStream
from evhdr.kernels import DeformableKernel, deformable_conv2d
from evhdr.voxelizer import VoxelSpec, build_spike_tensor

from conftest import random_stream

pytestmark = pytest.mark.skipif("cython" not in _backend.available(), reason="compiled extension not built")


def both():
    return _backend.get("python"), _backend.get("cython")


def test_selection():
    assert _backend.BACKEND in _backend.available()
    with pytest.raises(ValueError):
        _backend.get("fortran")


def test_simulator_identical(rng):
    py, cy = both()
    logs = rng.normal(0, 0.6, (10, 32, 32))
    ts = np.cumsum(rng.integers(1, 5000, 10))
    cfg = SimConfig(S=0.17, S_pos=0.2, S_neg=0.15)
    a, sa = simulate_log_frames(logs, ts, cfg, backend=py)
    b, sb = simulate_log_frames(logs, ts, cfg, backend=cy)
    assert a == b
    np.testing.assert_array_equal(sa.reference, sb.reference)
    np.testing.assert_array_equal(sa.last_timestamp, sb.last_timestamp)


def test_voxelizer_identical(rng):
    py, cy = both()
    s = random_stream(rng, 20_000, geometry=(40, 30), t_max=123_457)
    spec = VoxelSpec((40, 30), 7)
    a = build_spike_tensor(s, 0, 123_457, spec, backend=py)
    b = build_spike_tensor(s, 0, 123_457, spec, backend=cy)
    np.testing.assert_array_equal(a.values, b.values)


def test_deform_identical(rng):
    py, cy = both()
    F = rng.normal(size=(4, 12, 13))
    k = DeformableKernel(rng.normal(size=(3, 4, 3, 3)), rng.normal(0, 2, (9, 2, 12, 13)))
    np.testing.assert_array_equal(deformable_conv2d(F, k, backend=py), deformable_conv2d(F, k, backend=cy))


def test_empty_inputs():
    py, cy = both()
    spec = VoxelSpec((4, 4), 3)
    e = EventStream.empty((4, 4))
    assert build_spike_tensor(e, 0, 10, spec, backend=py) == build_spike_tensor(e, 0, 10, spec, backend=cy)


def test_env_forces_fallback():
    import os
    import subprocess
    import sys

    env = dict(os.environ, EVHDR_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", "import evhdr; print(evhdr.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
