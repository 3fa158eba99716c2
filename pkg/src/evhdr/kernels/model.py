"""The reconstruction network assembled from the reference kernels.

For each voxel grid ``E_t`` of a sequence: recurrent extraction with
periodic key-frame refresh, pyramidal alignment of the ``2N + 1`` neighbor
features to ``F_t``, local attention fusion, and a 1x1 head with a
sigmoid, upsampled back to sensor resolution.  Sequence ends replicate
the first/last feature.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attention import AttentionSpec, local_attention_fuse
from .conv import conv2d
from .pyramid import PyramidSpec, align_features_pyramid
from .recurrent import ExtractorParams, KeyFrameSchedule, keyframe_gate, recurrent_extract_step
from .sampling import upsample_bilinear


@dataclass(eq=False)
class ReconstructionModel:
    extractor: ExtractorParams
    pyramid: PyramidSpec
    attention: AttentionSpec
    head: tuple = field(repr=False)  # ((1, C, 1, 1), (1,))
    schedule: KeyFrameSchedule = KeyFrameSchedule()

    @classmethod
    def random(cls, bins=5, channels=32, downsample=4, levels=3, key_dim=8, radius=2,
               n_frames=3, period=5, seed=0):
        rng = np.random.default_rng(seed)
        return cls(
            ExtractorParams.random(bins, channels, downsample, rng=rng),
            PyramidSpec.random(channels, levels, rng=rng),
            AttentionSpec.random(channels, key_dim, radius, n_frames, rng=rng),
            (rng.normal(0, 0.3, (1, channels, 1, 1)), np.zeros(1)),
            KeyFrameSchedule(period),
        )

    # --- (de)serialization through the flat weight container -------------

    def to_dict(self):
        d = {}

        def put(prefix, wb):
            d[prefix + ".w"], d[prefix + ".b"] = wb

        ex = self.extractor
        for i, wb in enumerate(ex.down):
            put(f"extractor.down.{i}", wb)
        put("extractor.hidden", ex.hidden)
        put("extractor.out", ex.out)
        for i, wb in enumerate(ex.embed):
            put(f"gate.embed.{i}", wb)
        put("gate.in", ex.gate_in)
        for i, (a, b) in enumerate(ex.blocks):
            put(f"gate.block.{i}.conv1", a)
            put(f"gate.block.{i}.conv2", b)
        py = self.pyramid
        for name in ("down", "offset", "dconv", "fuse"):
            for i, wb in enumerate(getattr(py, name)):
                put(f"pyramid.{name}.{i}", wb)
        put("pyramid.final", py.final)
        d["attention.key.w"] = self.attention.key_weight
        d["attention.key.b"] = (self.attention.key_bias if self.attention.key_bias is not None
                                else np.zeros(self.attention.key_dim))
        put("head", self.head)
        return d

    def meta(self):
        return {
            "bins": self.extractor.bins,
            "channels": self.extractor.channels,
            "downsample": self.extractor.downsample,
            "n_blocks": len(self.extractor.blocks),
            "levels": self.pyramid.levels,
            "radius": self.attention.radius,
            "n_frames": self.attention.n_frames,
            "period": self.schedule.period,
        }

    @classmethod
    def from_dict(cls, d, meta):
        get = lambda p: (d[p + ".w"], d[p + ".b"])
        ex = ExtractorParams.zeros(meta["bins"], meta["channels"], meta["downsample"], meta["n_blocks"])
        ex.down = [get(f"extractor.down.{i}") for i in range(len(ex.down))]
        ex.hidden = get("extractor.hidden")
        ex.out = get("extractor.out")
        ex.embed = [get(f"gate.embed.{i}") for i in range(len(ex.embed))]
        ex.gate_in = get("gate.in")
        ex.blocks = [(get(f"gate.block.{i}.conv1"), get(f"gate.block.{i}.conv2"))
                     for i in range(len(ex.blocks))]
        py = PyramidSpec.zeros(meta["channels"], meta["levels"])
        for name in ("down", "offset", "dconv", "fuse"):
            setattr(py, name, [get(f"pyramid.{name}.{i}") for i in range(len(getattr(py, name)))])
        py.final = get("pyramid.final")
        att = AttentionSpec(d["attention.key.w"], d["attention.key.b"], meta["radius"], meta["n_frames"])
        return cls(ex, py, att, get("head"), KeyFrameSchedule(meta["period"]))

    # --- forward ----------------------------------------------------------

    def extract(self, grids):
        feats, h, prev = [], None, None
        for t, g in enumerate(grids):
            f, h = recurrent_extract_step(g, prev, h, self.extractor)
            feats.append(keyframe_gate(f, g, t, self.schedule, self.extractor))
            prev = g
        return feats

    def forward(self, grids, backend=None) -> np.ndarray:
        """Reconstruct one frame per grid; returns ``(T, H, W)`` in ``[0, 1]``."""
        grids = [np.asarray(getattr(g, "values", g), dtype=np.float64) for g in grids]
        if not grids:
            return np.zeros((0, 0, 0))
        feats = self.extract(grids)
        n = self.attention.n_frames // 2
        full = grids[0].shape[1:]
        out = []
        for t in range(len(feats)):
            idx = [min(max(t + i, 0), len(feats) - 1) for i in range(-n, n + 1)]
            aligned = np.stack([align_features_pyramid(feats[j], feats[t], self.pyramid, backend=backend)
                                for j in idx])
            fused = local_attention_fuse(aligned, self.attention)
            logit = conv2d(fused, *self.head)
            img = 1.0 / (1.0 + np.exp(-upsample_bilinear(logit, full)))
            out.append(img[0])
        return np.stack(out)
