"""Pyramidal deformable alignment of a neighbor feature map to a reference.

Level 1 is full resolution; level ``l + 1`` is produced from level ``l`` by
a stride-2 convolution.  Offsets are predicted coarse to fine: the
coarsest level sees only the two feature maps, each finer level also sees
the upsampled coarser offsets and adds its correction to them.
Upsampling doubles offset magnitudes because a pixel at level ``l + 1``
spans two pixels at level ``l``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NonPositiveLevels, ShapeMismatch
from .conv import DeformableKernel, conv2d, deformable_conv2d, leaky_relu
from .sampling import upsample_bilinear

KSIZE = 3
K = KSIZE * KSIZE


@dataclass(eq=False)
class PyramidSpec:
    """Weights for an ``levels``-deep alignment pyramid over ``channels``.

    Lists are indexed by level, 0 = full resolution.  Each entry is a
    ``(weight, bias)`` pair:

    * ``down[l]``: level ``l`` -> ``l + 1`` (``levels - 1`` entries)
    * ``offset[l]``: offset predictor, ``2C + 2K`` -> ``2K`` channels
    * ``dconv[l]``: deformable conv, ``C`` -> ``C``
    * ``fuse[l]``: combiner of aligned features with the upsampled coarser
      result, ``2C`` -> ``C``
    * ``final``: combiner with the reference level-1 feature, ``2C`` -> ``C``
    """

    channels: int
    levels: int = 3
    down: list = field(default_factory=list, repr=False)
    offset: list = field(default_factory=list, repr=False)
    dconv: list = field(default_factory=list, repr=False)
    fuse: list = field(default_factory=list, repr=False)
    final: tuple = field(default=None, repr=False)

    def __post_init__(self):
        if self.levels < 1:
            raise NonPositiveLevels(f"pyramid needs at least one level, got {self.levels}")

    @classmethod
    def zeros(cls, channels, levels=3):
        c = channels
        z = lambda co, ci: (np.zeros((co, ci, KSIZE, KSIZE)), np.zeros(co))
        return cls(
            channels, levels,
            down=[z(c, c) for _ in range(levels - 1)],
            offset=[z(2 * K, 2 * c + 2 * K) for _ in range(levels)],
            dconv=[z(c, c) for _ in range(levels)],
            fuse=[z(c, 2 * c) for _ in range(levels)],
            final=z(c, 2 * c),
        )

    @classmethod
    def identity(cls, channels, levels=3):
        """Offsets zero; deformable convs and combiners pass features through."""
        spec = cls.zeros(channels, levels)
        eye = np.zeros((channels, channels, KSIZE, KSIZE))
        eye[np.arange(channels), np.arange(channels), KSIZE // 2, KSIZE // 2] = 1.0
        pick_first = np.concatenate([eye, np.zeros_like(eye)], axis=1)
        for l in range(levels):
            spec.dconv[l] = (eye.copy(), np.zeros(channels))
            spec.fuse[l] = (pick_first.copy(), np.zeros(channels))
        spec.down = [(eye.copy(), np.zeros(channels)) for _ in range(levels - 1)]
        spec.final = (pick_first.copy(), np.zeros(channels))
        return spec

    @classmethod
    def random(cls, channels, levels=3, rng=None, scale=0.1):
        rng = np.random.default_rng(rng)
        spec = cls.zeros(channels, levels)
        perturb = lambda wb: (rng.normal(0, scale, wb[0].shape), rng.normal(0, scale, wb[1].shape))
        spec.down = [perturb(wb) for wb in spec.down]
        # small offsets keep random demo models well inside the image
        spec.offset = [(rng.normal(0, scale * 0.1, w.shape), np.zeros_like(b)) for w, b in spec.offset]
        spec.dconv = [perturb(wb) for wb in spec.dconv]
        spec.fuse = [perturb(wb) for wb in spec.fuse]
        spec.final = perturb(spec.final)
        return spec


def build_pyramid(F, spec: PyramidSpec) -> list:
    feats = [np.asarray(F, dtype=np.float64)]
    for w, b in spec.down:
        feats.append(leaky_relu(conv2d(feats[-1], w, b, stride=2)))
    return feats


def upsample_offsets(offsets, shape):
    """Bilinear x2 upsampling of a ``(K, 2, h, w)`` offset field to ``shape``,
    with magnitudes doubled."""
    k, two, h, w = offsets.shape
    up = upsample_bilinear(offsets.reshape(k * two, h, w), shape)
    return 2.0 * up.reshape(k, two, *shape)


def predict_level_offsets(F_i, F_t, coarser, weights):
    """Offsets at one level: ``coarser`` (already upsampled, or zeros) plus
    the predictor's correction."""
    h, w = F_i.shape[1:]
    if coarser is None:
        coarser = np.zeros((K, 2, h, w))
    x = np.concatenate([F_i, F_t, coarser.reshape(2 * K, h, w)], axis=0)
    delta = conv2d(x, weights[0], weights[1]).reshape(K, 2, h, w)
    return coarser + delta


def _check_pair(F_i, F_t, spec):
    F_i = np.asarray(F_i, dtype=np.float64)
    F_t = np.asarray(F_t, dtype=np.float64)
    if F_i.shape != F_t.shape or F_i.ndim != 3:
        raise ShapeMismatch(f"feature maps differ: {F_i.shape} vs {F_t.shape}")
    if F_i.shape[0] != spec.channels:
        raise ShapeMismatch(f"{F_i.shape[0]} channels, pyramid expects {spec.channels}")
    if spec.levels < 1:
        raise NonPositiveLevels(f"pyramid needs at least one level, got {spec.levels}")
    return F_i, F_t


def predict_offsets_pyramid(F_i, F_t, spec: PyramidSpec, *, _pyramids=None) -> list:
    """Offset fields per level, index 0 = full resolution."""
    F_i, F_t = _check_pair(F_i, F_t, spec)
    pi, pt = _pyramids or (build_pyramid(F_i, spec), build_pyramid(F_t, spec))
    out = [None] * spec.levels
    coarser = None
    for l in reversed(range(spec.levels)):
        shape = pi[l].shape[1:]
        up = None if coarser is None else upsample_offsets(coarser, shape)
        coarser = predict_level_offsets(pi[l], pt[l], up, spec.offset[l])
        out[l] = coarser
    return out


def align_features_pyramid(F_i, F_t, spec: PyramidSpec, offsets=None, *, backend=None):
    """Align ``F_i`` to ``F_t``; ``offsets`` (per level) overrides prediction."""
    F_i, F_t = _check_pair(F_i, F_t, spec)
    pi, pt = build_pyramid(F_i, spec), build_pyramid(F_t, spec)
    if offsets is None:
        offsets = predict_offsets_pyramid(F_i, F_t, spec, _pyramids=(pi, pt))
    if len(offsets) != spec.levels:
        raise ShapeMismatch(f"{len(offsets)} offset levels for a {spec.levels}-level pyramid")
    aligned = None
    for l in reversed(range(spec.levels)):
        shape = pi[l].shape[1:]
        w, b = spec.dconv[l]
        warped = deformable_conv2d(pi[l], DeformableKernel(w, offsets[l], b), backend=backend)
        prev = np.zeros_like(warped) if aligned is None else upsample_bilinear(aligned, shape)
        aligned = conv2d(np.concatenate([warped, prev]), *spec.fuse[l])
    return conv2d(np.concatenate([aligned, pt[0]]), *spec.final)
