"""Persistence for events and frames, and trigger/event synchronization.

EVT1 layout (little-endian)::

    header, 24 bytes: b"EVT1" | u16 version | u16 width | u16 height
                      | u16 reserved (0) | u64 count | 4 zero bytes
    record, 13 bytes: u64 t | u16 x | u16 y | i8 q

Frames live on disk as binary 16-bit PGM files listed in a JSON manifest
``{"geometry": [w, h], "bit_depth": n, "frames": [{"t": us, "path": p}]}``;
the manifest carries the true bit depth.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .event_core import EventStream, TriggerTrack, slice_between_frames, validate_stream
from .errors import (
    BadMagic,
    BitDepthOverflow,
    CorruptHeader,
    DegenerateSequence,
    FormatError,
    GeometryMismatch,
    MalformedLine,
    MissingFile,
    TimestampNotIncreasing,
    TrailingData,
    TriggerOutsideStream,
    TruncatedPayload,
    UnsupportedVersion,
    ValidationError,
)

EVT1_MAGIC = b"EVT1"
EVT1_VERSION = 1
_HEADER = struct.Struct("<4sHHHHQ4s")
HEADER_SIZE = _HEADER.size  # 24
RECORD_DTYPE = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("q", "i1")])
RECORD_SIZE = RECORD_DTYPE.itemsize  # 13

DEFAULT_SYNC_TOLERANCE_US = 10_000


# --- EVT1 ----------------------------------------------------------------


def parse_evt1(data: bytes) -> EventStream:
    data = memoryview(data).cast("B")
    if len(data) < 4 or bytes(data[:4]) != EVT1_MAGIC:
        raise BadMagic(f"expected {EVT1_MAGIC!r}, got {bytes(data[:4])!r}")
    if len(data) < HEADER_SIZE:
        raise TruncatedPayload(len(data), f"header truncated at byte offset {len(data)}")
    magic, version, width, height, reserved, count, pad = _HEADER.unpack_from(data)
    if version != EVT1_VERSION:
        raise UnsupportedVersion(f"EVT1 version {version} is not supported")
    if reserved != 0 or pad != b"\0\0\0\0":
        raise CorruptHeader("reserved header bytes must be zero")
    expected = HEADER_SIZE + RECORD_SIZE * count
    if len(data) < expected:
        whole = (len(data) - HEADER_SIZE) // RECORD_SIZE
        raise TruncatedPayload(HEADER_SIZE + whole * RECORD_SIZE)
    if len(data) > expected:
        raise TrailingData(expected)
    rec = np.frombuffer(data, dtype=RECORD_DTYPE, count=count, offset=HEADER_SIZE)
    if count and rec["t"].max() > np.iinfo(np.int64).max:
        raise FormatError("timestamp exceeds the signed 64-bit range")
    return EventStream.from_columns(
        (width, height), rec["t"].astype(np.int64), rec["x"], rec["y"], rec["q"]
    )


def write_evt1(stream: EventStream) -> bytes:
    w, h = stream.geometry
    if w > 0xFFFF or h > 0xFFFF:
        raise ValidationError(f"geometry {stream.geometry} does not fit EVT1's 16-bit fields")
    header = _HEADER.pack(EVT1_MAGIC, EVT1_VERSION, w, h, 0, len(stream), b"\0\0\0\0")
    rec = np.empty(len(stream), dtype=RECORD_DTYPE)
    rec["t"] = stream.t
    rec["x"] = stream.x
    rec["y"] = stream.y
    rec["q"] = stream.q
    return header + rec.tobytes()


# --- CSV -----------------------------------------------------------------


def parse_csv_events(text: str, geometry) -> EventStream:
    """Parse ``t,x,y,q`` lines; blank lines and ``#`` comments are skipped."""
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        parts = s.split(",")
        if len(parts) != 4:
            raise MalformedLine(lineno, line)
        try:
            t, x, y, q = (int(p) for p in parts)
        except ValueError:
            raise MalformedLine(lineno, line) from None
        rows.append((x, y, q, t))
    return validate_stream(rows, geometry)


def write_csv_events(stream: EventStream) -> str:
    lines = ["# t,x,y,q"]
    lines += [f"{t},{x},{y},{q}" for t, x, y, q in
              zip(stream.t.tolist(), stream.x.tolist(), stream.y.tolist(), stream.q.tolist())]
    return "\n".join(lines) + "\n"


def read_events(path, geometry=None) -> EventStream:
    """Load an ``.evt1`` or ``.csv`` file (CSV needs ``geometry``)."""
    path = Path(path)
    if not path.exists():
        raise MissingFile(str(path))
    if path.suffix.lower() == ".csv":
        if geometry is None:
            raise ValidationError("CSV events need an explicit geometry")
        return parse_csv_events(path.read_text(encoding="utf-8"), geometry)
    return parse_evt1(path.read_bytes())


def write_events(stream: EventStream, path) -> Path:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        path.write_text(write_csv_events(stream), encoding="utf-8")
    else:
        path.write_bytes(write_evt1(stream))
    return path


# --- PGM -----------------------------------------------------------------


def _pgm_tokens(data: bytes, count: int):
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        tokens.append(data[start:pos])
    return tokens, pos + 1  # a single whitespace byte ends the header


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) PGM as a uint16 array of shape ``(H, W)``."""
    path = Path(path)
    if not path.exists():
        raise MissingFile(str(path))
    data = path.read_bytes()
    (magic, w, h, maxval), start = _pgm_tokens(data, 4)
    if magic != b"P5":
        raise BadMagic(f"{path}: not a binary PGM")
    w, h, maxval = int(w), int(h), int(maxval)
    dtype = ">u2" if maxval > 255 else "u1"
    n = w * h * np.dtype(dtype).itemsize
    if len(data) - start < n:
        raise TruncatedPayload(len(data), f"{path}: pixel data truncated")
    img = np.frombuffer(data, dtype=dtype, count=w * h, offset=start)
    return img.reshape(h, w).astype(np.uint16)


def write_pgm(path, image, maxval=65535) -> Path:
    """Write ``image`` as a P5 PGM (values rounded and clipped to ``maxval``).

    ``maxval`` below 256 gives one byte per sample, otherwise two.
    """
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValidationError("PGM images are 2-D")
    if not 0 < maxval <= 65535:
        raise ValidationError(f"PGM maxval must be in 1..65535, got {maxval}")
    if not np.issubdtype(img.dtype, np.integer):
        img = np.rint(img)
    img = np.clip(img, 0, maxval).astype("u1" if maxval < 256 else ">u2")
    h, w = img.shape
    path = Path(path)
    path.write_bytes(f"P5\n{w} {h}\n{maxval}\n".encode("ascii") + img.tobytes())
    return path


# --- frames --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FrameSequence:
    """Timestamped intensity frames sharing one geometry.

    ``frames`` has shape ``(N, H, W)``; values are linear intensities (or
    encoded values when ``color_space == "encoded"``) below ``2**bit_depth``.
    """

    geometry: tuple[int, int]
    timestamps: np.ndarray
    frames: np.ndarray = field(repr=False)
    bit_depth: int = 16
    color_space: str = "linear"

    def __post_init__(self):
        ts = np.array(self.timestamps, dtype=np.int64).reshape(-1)
        frames = np.array(self.frames)
        w, h = (int(v) for v in self.geometry)
        if frames.ndim != 3 or frames.shape[1:] != (h, w):
            raise GeometryMismatch(f"frames of shape {frames.shape[1:]} do not match geometry {(w, h)}")
        if len(ts) != frames.shape[0]:
            raise ValidationError("one timestamp per frame is required")
        bad = np.flatnonzero(np.diff(ts) <= 0)
        if len(bad):
            raise TimestampNotIncreasing(int(bad[0]) + 1)
        if not 1 <= self.bit_depth <= 16:
            raise ValidationError(f"bit_depth must be in 1..16, got {self.bit_depth}")
        if self.color_space not in ("linear", "encoded"):
            raise ValidationError(f"unknown color space {self.color_space!r}")
        if frames.size:
            if not np.all(np.isfinite(frames)):
                raise ValidationError("frame values must be finite")
            if frames.max() >= 2 ** self.bit_depth or frames.min() < 0:
                raise BitDepthOverflow(
                    f"pixel value outside [0, 2^{self.bit_depth}) for a {self.bit_depth}-bit sequence"
                )
        ts.flags.writeable = False
        frames.flags.writeable = False
        object.__setattr__(self, "geometry", (w, h))
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "frames", frames)

    @property
    def full_scale(self) -> float:
        return float(2 ** self.bit_depth - 1)

    def __len__(self) -> int:
        return len(self.timestamps)

    def normalized(self) -> np.ndarray:
        """Frames as float64 in ``[0, 1]`` of full scale."""
        return self.frames.astype(np.float64) / self.full_scale


def load_frame_sequence(manifest_path) -> FrameSequence:
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise MissingFile(str(manifest_path))
    doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    try:
        w, h = (int(v) for v in doc["geometry"])
        bit_depth = int(doc["bit_depth"])
        entries = doc["frames"]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{manifest_path}: invalid frame manifest ({exc})") from None
    base = manifest_path.parent
    ts, imgs = [], []
    for i, entry in enumerate(entries):
        t = int(entry["t"])
        if ts and t <= ts[-1]:
            raise TimestampNotIncreasing(i)
        img = read_pgm(base / entry["path"])
        if img.shape != (h, w):
            raise GeometryMismatch(f"frame {i} has shape {img.shape}, manifest declares {(h, w)}")
        if img.size and int(img.max()) >= 2 ** bit_depth:
            raise BitDepthOverflow(f"frame {i} holds {int(img.max())} >= 2^{bit_depth}")
        ts.append(t)
        imgs.append(img)
    frames = np.stack(imgs) if imgs else np.zeros((0, h, w), np.uint16)
    return FrameSequence((w, h), np.array(ts, np.int64), frames, bit_depth,
                         doc.get("color_space", "linear"))


def save_frame_sequence(seq: FrameSequence, directory, stem="frame") -> Path:
    """Write PGM frames plus ``<stem>s.json`` manifest into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (t, img) in enumerate(zip(seq.timestamps.tolist(), seq.frames)):
        name = f"{stem}_{i:05d}.pgm"
        write_pgm(directory / name, img)
        entries.append({"t": t, "path": name})
    doc = {
        "geometry": list(seq.geometry),
        "bit_depth": seq.bit_depth,
        "color_space": seq.color_space,
        "frames": entries,
    }
    path = directory / f"{stem}s.json"
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return path


# --- synchronization -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class SyncedDataset:
    events: EventStream
    frames: FrameSequence
    triggers: TriggerTrack
    segments: list


def align_triggers(stream: EventStream, frames: FrameSequence,
                   tolerance: int = DEFAULT_SYNC_TOLERANCE_US) -> SyncedDataset:
    """Pair each inter-frame interval with the events recorded inside it.

    Frame timestamps are the recorded trigger times; a trigger more than
    ``tolerance`` microseconds outside the event time span is rejected.
    """
    if len(frames) < 2:
        raise DegenerateSequence("synchronization needs at least 2 frames")
    if len(stream) == 0:
        raise ValidationError("synchronization needs a non-empty event stream")
    if tuple(stream.geometry) != tuple(frames.geometry):
        raise GeometryMismatch(f"events {stream.geometry} vs frames {frames.geometry}")
    first, last = stream.time_span
    for i, t in enumerate(frames.timestamps.tolist()):
        if t < first - tolerance or t > last + tolerance:
            raise TriggerOutsideStream(i, tolerance)
    triggers = TriggerTrack(frames.timestamps)
    return SyncedDataset(stream, frames, triggers, slice_between_frames(stream, triggers))
