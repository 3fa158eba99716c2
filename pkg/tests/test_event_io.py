import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evhdr.errors import (
    BadMagic,
    BitDepthOverflow,
    CorruptHeader,
    GeometryMismatch,
    InvalidPolarity,
    MalformedLine,
    MissingFile,
    TimestampNotIncreasing,
    TrailingData,
    TriggerOutsideStream,
    TruncatedPayload,
    UnsupportedVersion,
)
from evhdr.event_core import Event, EventStream, slice_by_time, validate_stream
from evhdr.event_io import (
    FrameSequence,
    align_triggers,
    load_frame_sequence,
    parse_csv_events,
    parse_evt1,
    read_pgm,
    save_frame_sequence,
    write_csv_events,
    write_evt1,
    write_pgm,
)

from conftest import random_stream


def header(count, width=346, height=260, version=1):
    return b"EVT1" + struct.pack("<HHHHQ", version, width, height, 0, count) + b"\0" * 4


class TestEvt1:
    def test_header_only(self):
        s = parse_evt1(header(0))
        assert len(s) == 0 and s.geometry == (346, 260)

    def test_hand_built_record(self):
        # t=5 (u64), x=10 (u16), y=20 (u16), q=+1 (i8), all little-endian
        record = bytes([5, 0, 0, 0, 0, 0, 0, 0, 10, 0, 20, 0, 1])
        s = parse_evt1(header(1) + record)
        assert s.events == [Event(10, 20, 1, 5)]

    def test_negative_polarity_byte(self):
        record = bytes([5, 0, 0, 0, 0, 0, 0, 0, 10, 0, 20, 0, 0xFF])
        assert parse_evt1(header(1) + record)[0].q == -1

    def test_truncated(self):
        record = bytes(13)
        with pytest.raises(TruncatedPayload) as exc:
            parse_evt1(header(2) + record)
        assert exc.value.offset == 24 + 13

    def test_bad_magic(self):
        with pytest.raises(BadMagic):
            parse_evt1(b"EVT2" + header(0)[4:])

    def test_version(self):
        with pytest.raises(UnsupportedVersion):
            parse_evt1(header(0, version=2))

    def test_reserved_bytes(self):
        data = bytearray(header(0))
        data[22] = 1
        with pytest.raises(CorruptHeader):
            parse_evt1(bytes(data))

    def test_trailing(self):
        with pytest.raises(TrailingData):
            parse_evt1(header(0) + b"\0")

    def test_validation_errors_propagate(self):
        record = bytes([5, 0, 0, 0, 0, 0, 0, 0, 10, 0, 20, 0, 3])
        with pytest.raises(InvalidPolarity):
            parse_evt1(header(1) + record)

    def test_sizes(self, rng):
        assert len(write_evt1(EventStream.empty((346, 260)))) == 24
        s = random_stream(rng, 3)
        assert len(write_evt1(s)) - 24 == 39

    def test_write_matches_layout(self):
        s = validate_stream([(10, 20, -1, 5)], (346, 260))
        assert write_evt1(s) == header(1) + struct.pack("<QHHb", 5, 10, 20, -1)


@settings(max_examples=100, deadline=None)
@given(n=st.integers(0, 300), seed=st.integers(0, 2**31))
def test_evt1_round_trip(n, seed):
    s = random_stream(np.random.default_rng(seed), n)
    b = write_evt1(s)
    assert parse_evt1(b) == s
    assert write_evt1(parse_evt1(b)) == b


class TestCsv:
    def test_single(self):
        assert parse_csv_events("5,10,20,1\n", (346, 260)).events == [Event(10, 20, 1, 5)]

    def test_comments_blank(self):
        assert len(parse_csv_events("# comment\n\n", (346, 260))) == 0

    def test_polarity(self):
        with pytest.raises(InvalidPolarity):
            parse_csv_events("5,10,20,2\n", (346, 260))

    @pytest.mark.parametrize("text,line", [("5,10,20\n", 1), ("# c\n5,a,20,1\n", 2), ("1,1,1,1,1\n", 1)])
    def test_malformed(self, text, line):
        with pytest.raises(MalformedLine) as exc:
            parse_csv_events(text, (346, 260))
        assert exc.value.line == line

    def test_csv_evt1_csv(self, rng):
        s = random_stream(rng, 200)
        text = write_csv_events(s)
        again = write_csv_events(parse_evt1(write_evt1(parse_csv_events(text, s.geometry))))
        assert again == text


class TestFrames:
    def write_manifest(self, tmp_path, frames, ts, bit_depth=12):
        entries = []
        for i, img in enumerate(frames):
            write_pgm(tmp_path / f"f{i}.pgm", img)
            entries.append({"t": ts[i], "path": f"f{i}.pgm"})
        h, w = frames[0].shape
        doc = {"geometry": [w, h], "bit_depth": bit_depth, "frames": entries}
        p = tmp_path / "frames.json"
        p.write_text(json.dumps(doc))
        return p

    def test_two_frames(self, tmp_path):
        imgs = [np.full((4, 5), 7, np.uint16), np.full((4, 5), 4095, np.uint16)]
        seq = load_frame_sequence(self.write_manifest(tmp_path, imgs, [0, 2000]))
        assert len(seq) == 2 and seq.geometry == (5, 4)
        assert seq.timestamps.tolist() == [0, 2000]
        np.testing.assert_array_equal(seq.frames[1], imgs[1])

    def test_equal_timestamps(self, tmp_path):
        imgs = [np.zeros((4, 5), np.uint16)] * 2
        with pytest.raises(TimestampNotIncreasing):
            load_frame_sequence(self.write_manifest(tmp_path, imgs, [0, 0]))

    def test_bit_depth_overflow(self, tmp_path):
        imgs = [np.full((4, 5), 5000, np.uint16)]
        with pytest.raises(BitDepthOverflow):
            load_frame_sequence(self.write_manifest(tmp_path, imgs, [0]))

    def test_geometry_mismatch(self, tmp_path):
        p = self.write_manifest(tmp_path, [np.zeros((4, 5), np.uint16)] * 2, [0, 1])
        write_pgm(tmp_path / "f1.pgm", np.zeros((3, 5)))
        with pytest.raises(GeometryMismatch):
            load_frame_sequence(p)

    def test_missing_file(self, tmp_path):
        p = self.write_manifest(tmp_path, [np.zeros((4, 5), np.uint16)], [0])
        (tmp_path / "f0.pgm").unlink()
        with pytest.raises(MissingFile):
            load_frame_sequence(p)

    def test_pgm_round_trip(self, tmp_path, rng):
        img = rng.integers(0, 65536, (7, 9)).astype(np.uint16)
        write_pgm(tmp_path / "a.pgm", img)
        np.testing.assert_array_equal(read_pgm(tmp_path / "a.pgm"), img)

    def test_8bit_pgm_with_comment(self, tmp_path):
        (tmp_path / "b.pgm").write_bytes(b"P5\n# hi\n2 1\n255\n" + bytes([3, 250]))
        np.testing.assert_array_equal(read_pgm(tmp_path / "b.pgm"), [[3, 250]])

    def test_save_load(self, tmp_path, rng):
        seq = FrameSequence((6, 4), [0, 10, 30], rng.integers(0, 4096, (3, 4, 6)), 12)
        back = load_frame_sequence(save_frame_sequence(seq, tmp_path))
        np.testing.assert_array_equal(back.frames, seq.frames)
        assert back.bit_depth == 12 and back.timestamps.tolist() == [0, 10, 30]


class TestAlignTriggers:
    def frames(self, ts, geometry=(4, 4)):
        w, h = geometry
        return FrameSequence(geometry, ts, np.zeros((len(ts), h, w)), 12)

    def test_segments(self):
        s = validate_stream([(0, 0, 1, t) for t in range(0, 1901, 100)], (4, 4))
        ds = align_triggers(s, self.frames([0, 1000, 2000]))
        assert len(ds.segments) == 2
        assert sum(len(p) for p in ds.segments) == len(s)

    def test_outside(self):
        s = validate_stream([(0, 0, 1, 0), (0, 0, 1, 100)], (4, 4))
        with pytest.raises(TriggerOutsideStream) as exc:
            align_triggers(s, self.frames([0, 50_000]))
        assert exc.value.index == 1 and exc.value.tolerance == 10_000

    def test_tolerance_override(self):
        s = validate_stream([(0, 0, 1, 0), (0, 0, 1, 100)], (4, 4))
        assert len(align_triggers(s, self.frames([0, 50_000]), tolerance=60_000).segments) == 1

    def test_never_drops_events(self, rng):
        s = random_stream(rng, 2000, geometry=(4, 4), t_max=9_000)
        ts = [0, 1234, 4000, 8000, 9000]
        ds = align_triggers(s, self.frames(ts))
        assert sum(len(p) for p in ds.segments) == len(slice_by_time(s, ts[0], ts[-1]))
