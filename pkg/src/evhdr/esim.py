"""Frame-to-event simulation under the contrast-threshold model, and its
inverse (event integration).

Per pixel, log intensity is interpolated linearly between frame times.
Whenever it reaches ``reference + S`` (or ``reference - S``) an event fires
at the crossing instant, rounded to the microsecond, and the reference
moves by exactly one threshold.  Crossings that land exactly on a
threshold fire (closed threshold).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _backend
from .event_core import EventStream
from .event_io import FrameSequence
from .errors import DegenerateSequence, GeometryMismatch, NonFiniteIntensity, ValidationError
from .voxelizer import VoxelGrid, VoxelSpec, build_spike_tensor

# slack for accumulated rounding when comparing against a threshold level
CROSSING_TOL = 1e-9
DEFAULT_PAIR_WINDOW_US = 2_000  # one frame at 500 fps


@dataclass(frozen=True)
class SimConfig:
    S: float = 0.2
    log_eps: float = 1e-3
    S_pos: Optional[float] = None
    S_neg: Optional[float] = None

    def __post_init__(self):
        for name in ("S", "S_pos", "S_neg"):
            v = getattr(self, name)
            if v is not None and not (np.isfinite(v) and v > 0):
                raise ValidationError(f"sim.{name} must be > 0")
        if not (np.isfinite(self.log_eps) and self.log_eps > 0):
            raise ValidationError("sim.log_eps must be > 0")

    @property
    def threshold_pos(self) -> float:
        return float(self.S if self.S_pos is None else self.S_pos)

    @property
    def threshold_neg(self) -> float:
        return float(self.S if self.S_neg is None else self.S_neg)


@dataclass(frozen=True, eq=False)
class PixelState:
    reference: np.ndarray  # log level of the last event (or of the first frame)
    last_timestamp: np.ndarray  # microseconds


def log_intensity(values, cfg: SimConfig) -> np.ndarray:
    """``log(I + eps)`` for intensities normalized to a full scale of 1."""
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise NonFiniteIntensity("intensity contains non-finite values")
    if np.any(values < 0):
        raise ValidationError("intensity must be non-negative")
    return np.log(values + cfg.log_eps)


def simulate_log_frames(log_frames, timestamps, cfg: SimConfig, *, backend=None):
    """Simulate from log-intensity frames ``(N, H, W)`` at ``timestamps``.

    Returns ``(stream, state)``.  Events are ordered by time, ties broken by
    ``(y, x, polarity)``.
    """
    log_frames = np.asarray(log_frames, dtype=np.float64)
    timestamps = np.asarray(timestamps, dtype=np.int64)
    if log_frames.ndim != 3:
        raise ValidationError("log frames must be (N, H, W)")
    if log_frames.shape[0] < 2:
        raise DegenerateSequence("simulation needs at least 2 frames")
    if len(timestamps) != log_frames.shape[0] or np.any(np.diff(timestamps) <= 0):
        raise ValidationError("timestamps must strictly increase, one per frame")
    if not np.all(np.isfinite(log_frames)):
        raise NonFiniteIntensity("log intensity contains non-finite values")
    kern = backend or _backend.kernels
    t, x, y, q, ref, last_t = kern.simulate_log_frames(
        log_frames, timestamps, cfg.threshold_pos, cfg.threshold_neg, CROSSING_TOL
    )
    order = np.lexsort((q, x, y, t))
    _, h, w = log_frames.shape
    stream = EventStream._trusted((w, h), t[order], x[order], y[order], q[order])
    return stream, PixelState(ref, last_t)


def simulate_events(frames: FrameSequence, cfg: SimConfig = SimConfig(), *, backend=None) -> EventStream:
    """Events generated by a linear-intensity frame sequence."""
    if len(frames) < 2:
        raise DegenerateSequence("simulation needs at least 2 frames")
    logs = log_intensity(frames.normalized(), cfg)
    stream, _ = simulate_log_frames(logs, frames.timestamps, cfg, backend=backend)
    return stream


def integrate_events(stream: EventStream, initial_log, cfg: SimConfig = SimConfig()) -> np.ndarray:
    """Add each pixel's signed threshold steps to ``initial_log``."""
    initial_log = np.asarray(initial_log, dtype=np.float64)
    w, h = stream.geometry
    if initial_log.shape != (h, w):
        raise GeometryMismatch(f"initial image {initial_log.shape} vs stream geometry {(h, w)}")
    if not np.all(np.isfinite(initial_log)):
        raise NonFiniteIntensity("initial log image contains non-finite values")
    flat = stream.y.astype(np.int64) * w + stream.x
    pos = np.bincount(flat[stream.q > 0], minlength=h * w).reshape(h, w)
    neg = np.bincount(flat[stream.q < 0], minlength=h * w).reshape(h, w)
    return initial_log + cfg.threshold_pos * pos - cfg.threshold_neg * neg


def event_frame_oracle(h_prev, h_next, cfg: SimConfig, spec: VoxelSpec, *,
                       t0: int = 0, dT: int = DEFAULT_PAIR_WINDOW_US,
                       full_scale: float = 1.0, backend=None) -> VoxelGrid:
    """Voxel grid implied by two consecutive frames.

    Frames are linear intensities with the given ``full_scale``; events are
    simulated across ``[t0, t0 + dT]`` and binned over the closed window so
    that a change of exactly ``k`` thresholds deposits mass ``k``.
    """
    h_prev = np.asarray(h_prev, dtype=np.float64)
    h_next = np.asarray(h_next, dtype=np.float64)
    w, h = spec.geometry
    if h_prev.shape != (h, w) or h_next.shape != (h, w):
        raise GeometryMismatch(
            f"frames {h_prev.shape}/{h_next.shape} vs voxel geometry {(h, w)}"
        )
    logs = log_intensity(np.stack([h_prev, h_next]) / full_scale, cfg)
    stream, _ = simulate_log_frames(logs, [t0, t0 + dT], cfg, backend=backend)
    return build_spike_tensor(stream, t0, dT, spec, closed=True, backend=backend)
