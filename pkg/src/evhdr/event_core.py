"""Event data model, validation and temporal slicing.

Streams are stored column-wise (``t``, ``x``, ``y``, ``q`` numpy arrays)
and are immutable: the arrays are flagged read-only on construction and
every operation returns a new stream.  Timestamps are integer
microseconds; windows are half-open ``[t0, t1)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from .errors import (
    InsufficientTriggers,
    InvalidPolarity,
    InvalidWindow,
    NegativeTimestamp,
    OutOfBoundsEvent,
    UnsortedTimestamps,
    ValidationError,
)

T_DTYPE = np.int64
XY_DTYPE = np.int32
Q_DTYPE = np.int8


class Event(NamedTuple):
    x: int
    y: int
    q: int
    t: int


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True).reshape(-1)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class EventStream:
    """Time-ordered events on a ``(width, height)`` sensor.

    Build streams with :func:`validate_stream` (or :meth:`from_columns`);
    the plain constructor trusts its arguments.
    """

    geometry: tuple[int, int]
    t: np.ndarray = field(repr=False)
    x: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    q: np.ndarray = field(repr=False)

    @classmethod
    def empty(cls, geometry) -> "EventStream":
        return cls._trusted(geometry, [], [], [], [])

    @classmethod
    def _trusted(cls, geometry, t, x, y, q) -> "EventStream":
        return cls(
            (int(geometry[0]), int(geometry[1])),
            _frozen(t, T_DTYPE),
            _frozen(x, XY_DTYPE),
            _frozen(y, XY_DTYPE),
            _frozen(q, Q_DTYPE),
        )

    @classmethod
    def from_columns(cls, geometry, t, x, y, q) -> "EventStream":
        """Validated construction from separate columns."""
        return _validate_columns(geometry, t, x, y, q)

    @property
    def width(self) -> int:
        return self.geometry[0]

    @property
    def height(self) -> int:
        return self.geometry[1]

    @property
    def time_span(self) -> tuple[int, int]:
        if len(self.t) == 0:
            return (0, 0)
        return (int(self.t[0]), int(self.t[-1]))

    @property
    def events(self) -> list[Event]:
        return list(self)

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self) -> Iterator[Event]:
        for x, y, q, t in zip(self.x.tolist(), self.y.tolist(), self.q.tolist(), self.t.tolist()):
            yield Event(x, y, q, t)

    def __getitem__(self, item):
        if isinstance(item, slice):
            return EventStream._trusted(
                self.geometry, self.t[item], self.x[item], self.y[item], self.q[item]
            )
        return Event(int(self.x[item]), int(self.y[item]), int(self.q[item]), int(self.t[item]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.geometry == other.geometry
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.q, other.q)
        )

    __hash__ = None

    def to_array(self) -> np.ndarray:
        """``(N, 4)`` int64 array with columns ``x, y, q, t``."""
        return np.stack([self.x, self.y, self.q, self.t], axis=1).astype(np.int64)

    def select(self, mask_or_index) -> "EventStream":
        return EventStream._trusted(
            self.geometry,
            self.t[mask_or_index],
            self.x[mask_or_index],
            self.y[mask_or_index],
            self.q[mask_or_index],
        )


@dataclass(frozen=True, eq=False)
class TriggerTrack:
    """Strictly increasing frame-trigger timestamps in microseconds."""

    timestamps: np.ndarray

    def __post_init__(self):
        ts = _frozen(self.timestamps, T_DTYPE)
        if len(ts) > 1 and np.any(np.diff(ts) <= 0):
            bad = int(np.flatnonzero(np.diff(ts) <= 0)[0]) + 1
            raise ValidationError(f"trigger timestamps must strictly increase (index {bad})")
        object.__setattr__(self, "timestamps", ts)

    def __len__(self) -> int:
        return len(self.timestamps)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TriggerTrack):
            return NotImplemented
        return np.array_equal(self.timestamps, other.timestamps)

    __hash__ = None


def _check_geometry(geometry):
    try:
        w, h = (int(v) for v in geometry)
    except (TypeError, ValueError):
        raise ValidationError(f"geometry must be (width, height), got {geometry!r}") from None
    if w <= 0 or h <= 0:
        raise ValidationError(f"geometry must be positive, got {geometry!r}")
    return w, h


def _validate_columns(geometry, t, x, y, q) -> EventStream:
    w, h = _check_geometry(geometry)
    t = np.asarray(t, dtype=np.int64).reshape(-1)
    x = np.asarray(x, dtype=np.int64).reshape(-1)
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    q = np.asarray(q, dtype=np.int64).reshape(-1)
    if not (len(t) == len(x) == len(y) == len(q)):
        raise ValidationError("event columns differ in length")

    # first offending index wins; at equal index the order below decides
    checks = [
        (OutOfBoundsEvent, (x < 0) | (x >= w) | (y < 0) | (y >= h)),
        (InvalidPolarity, (q != 1) & (q != -1)),
        (NegativeTimestamp, t < 0),
    ]
    unsorted = np.zeros(len(t), dtype=bool)
    if len(t) > 1:
        unsorted[1:] = t[1:] < t[:-1]
    checks.append((UnsortedTimestamps, unsorted))

    first = None
    for exc, mask in checks:
        hits = np.flatnonzero(mask)
        if len(hits) and (first is None or hits[0] < first[1]):
            first = (exc, int(hits[0]))
    if first is not None:
        raise first[0](first[1])
    return EventStream._trusted((w, h), t, x, y, q)


def validate_stream(raw, geometry) -> EventStream:
    """Check raw events against ``geometry`` and return an :class:`EventStream`.

    ``raw`` may be an existing stream, an ``(N, 4)`` array or any iterable
    of ``(x, y, q, t)`` tuples.  Equal timestamps keep their input order.
    """
    if isinstance(raw, EventStream):
        return _validate_columns(geometry, raw.t, raw.x, raw.y, raw.q)
    arr = raw if isinstance(raw, np.ndarray) else list(raw)
    arr = np.asarray(arr, dtype=np.int64)
    if arr.size == 0:
        arr = arr.reshape(0, 4)
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise ValidationError("raw events must be (x, y, q, t) records")
    return _validate_columns(geometry, arr[:, 3], arr[:, 0], arr[:, 1], arr[:, 2])


def slice_by_time(stream: EventStream, t0: int, t1: int) -> EventStream:
    """Events with ``t0 <= t < t1``."""
    if t0 > t1:
        raise InvalidWindow(f"window start {t0} is after end {t1}")
    lo = np.searchsorted(stream.t, t0, side="left")
    hi = np.searchsorted(stream.t, t1, side="left")
    return stream[lo:hi]


def _as_triggers(triggers) -> TriggerTrack:
    return triggers if isinstance(triggers, TriggerTrack) else TriggerTrack(triggers)


def slice_between_frames(stream: EventStream, triggers) -> list[EventStream]:
    """Split ``stream`` into one substream per inter-trigger interval."""
    triggers = _as_triggers(triggers)
    if len(triggers) < 2:
        raise InsufficientTriggers(f"need at least 2 triggers, got {len(triggers)}")
    cuts = np.searchsorted(stream.t, triggers.timestamps, side="left")
    return [stream[int(a):int(b)] for a, b in zip(cuts[:-1], cuts[1:])]


def concatenate(streams: Iterable[EventStream]) -> EventStream:
    """Join time-ordered, non-overlapping streams that share a geometry."""
    streams = list(streams)
    if not streams:
        raise ValidationError("nothing to concatenate")
    geometry = streams[0].geometry
    cols = [np.concatenate([getattr(s, c) for s in streams]) for c in "txyq"]
    return _validate_columns(geometry, *cols)
