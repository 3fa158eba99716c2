"""Event spike tensors: inter-frame events binned into ``2B`` channels.

Each event is normalized to ``t* = (B - 1) (t - t0) / dT`` and split
between the two integer bins around ``t*`` with tent weights
``max(0, 1 - |n - t*|)``.  Channels ``0..B-1`` hold positive events,
``B..2B-1`` negative ones.
"""
from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _backend
from .event_core import EventStream, TriggerTrack, slice_between_frames
from .errors import (
    BadMagic,
    EventOutsideWindow,
    GeometryMismatch,
    InsufficientTriggers,
    NonPositiveWindow,
    TruncatedPayload,
    ValidationError,
)

DEFAULT_BINS = 5


@dataclass(frozen=True)
class VoxelSpec:
    geometry: tuple[int, int]
    B: int = DEFAULT_BINS

    def __post_init__(self):
        if int(self.B) < 2:
            raise ValidationError("voxel.B must be ≥ 2")
        w, h = (int(v) for v in self.geometry)
        if w <= 0 or h <= 0:
            raise ValidationError(f"voxel geometry must be positive, got {self.geometry}")
        object.__setattr__(self, "geometry", (w, h))
        object.__setattr__(self, "B", int(self.B))

    @property
    def shape(self) -> tuple[int, int, int]:
        w, h = self.geometry
        return (2 * self.B, h, w)


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    values: np.ndarray = field(repr=False)
    window: tuple[int, int]  # (t0, dT) in microseconds

    @property
    def B(self) -> int:
        return self.values.shape[0] // 2

    @property
    def positive(self) -> np.ndarray:
        return self.values[: self.B]

    @property
    def negative(self) -> np.ndarray:
        return self.values[self.B:]

    def mass(self) -> float:
        return float(self.values.sum())

    def __eq__(self, other):
        if not isinstance(other, VoxelGrid):
            return NotImplemented
        return tuple(self.window) == tuple(other.window) and np.array_equal(self.values, other.values)

    __hash__ = None


def build_spike_tensor(substream: EventStream, t0: int, dT: int, spec: VoxelSpec, *,
                       closed: bool = False,
                       normalize: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                       backend=None) -> VoxelGrid:
    """Voxelize events lying in ``[t0, t0 + dT)``.

    ``closed=True`` also admits events at exactly ``t0 + dT`` (they land in
    the last bin); the two-frame event oracle needs this because a change of
    an exact multiple of the threshold fires its final event at the frame
    time.  ``normalize`` is applied to the finished tensor.
    """
    if dT <= 0:
        raise NonPositiveWindow(f"window length must be positive, got {dT}")
    if tuple(substream.geometry) != spec.geometry:
        raise GeometryMismatch(f"stream {substream.geometry} vs voxel spec {spec.geometry}")
    t = substream.t
    end_bad = (t > t0 + dT) if closed else (t >= t0 + dT)
    bad = np.flatnonzero((t < t0) | end_bad)
    if len(bad):
        raise EventOutsideWindow(int(bad[0]))
    kern = backend or _backend.kernels
    w, h = spec.geometry
    tstar = ((spec.B - 1) * (t - t0)).astype(np.float64) / float(dT)
    values = kern.accumulate_spikes(substream.x, substream.y, substream.q, tstar, spec.B, h, w)
    if normalize is not None:
        values = np.asarray(normalize(values), dtype=np.float64)
    return VoxelGrid(values, (int(t0), int(dT)))


def batch_voxelize(stream: EventStream, triggers, spec: VoxelSpec, **kwargs) -> list[VoxelGrid]:
    """One grid per inter-trigger interval, in interval order."""
    triggers = triggers if isinstance(triggers, TriggerTrack) else TriggerTrack(triggers)
    if len(triggers) < 2:
        raise InsufficientTriggers(f"need at least 2 triggers, got {len(triggers)}")
    subs = slice_between_frames(stream, triggers)
    ts = triggers.timestamps.tolist()
    jobs = [(s, a, b - a) for s, a, b in zip(subs, ts[:-1], ts[1:])]

    def one(job):
        s, a, d = job
        return build_spike_tensor(s, a, d, spec, **kwargs)

    workers = min(_backend.thread_count(), len(jobs))
    if workers <= 1:
        return [one(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, jobs))


# --- VOX1 export ---------------------------------------------------------
# Each grid: 32-byte header b"VOX1" | u32 B | u32 H | u32 W | u64 t0 | u64 dT,
# then 2B*H*W little-endian float32 values.  A file is a run of such records.

VOX1_MAGIC = b"VOX1"
_VOX_HEADER = struct.Struct("<4sIIIQQ")


def write_vox1(grids) -> bytes:
    if isinstance(grids, VoxelGrid):
        grids = [grids]
    out = bytearray()
    for g in grids:
        c, h, w = g.values.shape
        t0, dT = g.window
        out += _VOX_HEADER.pack(VOX1_MAGIC, c // 2, h, w, t0, dT)
        out += np.ascontiguousarray(g.values, dtype="<f4").tobytes()
    return bytes(out)


def parse_vox1(data: bytes) -> list[VoxelGrid]:
    grids, pos = [], 0
    while pos < len(data):
        if len(data) - pos < _VOX_HEADER.size:
            raise TruncatedPayload(pos)
        magic, B, h, w, t0, dT = _VOX_HEADER.unpack_from(data, pos)
        if magic != VOX1_MAGIC:
            raise BadMagic(f"expected {VOX1_MAGIC!r} at byte offset {pos}")
        pos += _VOX_HEADER.size
        n = 2 * B * h * w
        if len(data) - pos < 4 * n:
            raise TruncatedPayload(pos)
        vals = np.frombuffer(data, dtype="<f4", count=n, offset=pos).astype(np.float64)
        grids.append(VoxelGrid(vals.reshape(2 * B, h, w), (int(t0), int(dT))))
        pos += 4 * n
    return grids
