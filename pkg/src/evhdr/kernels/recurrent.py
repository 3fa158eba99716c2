"""Recurrent feature extraction with a periodic key-frame refresh.

One step consumes the current and previous voxel grids plus the hidden
state::

    x  = strided convs(concat(E_i, E_prev))        # downsample by 2 per conv
    h  = tanh(conv(concat(x, h_prev)))
    F' = lrelu(conv(concat(x, h)))

On key frames the features are refreshed with the current grid through
residual blocks: ``F = F' + G(concat(F', embed(E_t)))``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeMismatch, ValidationError
from .conv import conv2d, leaky_relu


@dataclass(frozen=True)
class KeyFrameSchedule:
    period: int = 5

    def __post_init__(self):
        if int(self.period) < 1:
            raise ValidationError("keyframe period must be >= 1")

    def __contains__(self, t) -> bool:
        return t % self.period == 0

    def indices(self, n):
        return list(range(0, n, self.period))


@dataclass(eq=False)
class ExtractorParams:
    """Weights as ``(weight, bias)`` pairs.

    ``down``: strided convs, first takes ``4B`` channels; ``hidden``/``out``:
    ``2C -> C`` state update and output; ``embed``: strided convs bringing a
    ``2B``-channel grid to feature resolution; ``gate_in``: ``2C -> C``;
    ``blocks``: residual blocks, each ``(conv1, conv2)``.
    """

    bins: int
    channels: int
    down: list = field(default_factory=list, repr=False)
    hidden: tuple = field(default=None, repr=False)
    out: tuple = field(default=None, repr=False)
    embed: list = field(default_factory=list, repr=False)
    gate_in: tuple = field(default=None, repr=False)
    blocks: list = field(default_factory=list, repr=False)

    @property
    def downsample(self) -> int:
        return 2 ** len(self.down)

    @classmethod
    def zeros(cls, bins, channels, downsample=4, n_blocks=2):
        n = int(round(np.log2(downsample)))
        if 2 ** n != downsample:
            raise ValidationError("downsample factor must be a power of two")
        c = channels
        z = lambda co, ci: (np.zeros((co, ci, 3, 3)), np.zeros(co))
        return cls(
            bins, channels,
            down=[z(c, 4 * bins if i == 0 else c) for i in range(n)],
            hidden=z(c, 2 * c),
            out=z(c, 2 * c),
            embed=[z(c, 2 * bins if i == 0 else c) for i in range(n)],
            gate_in=z(c, 2 * c),
            blocks=[(z(c, c), z(c, c)) for _ in range(n_blocks)],
        )

    @classmethod
    def random(cls, bins, channels, downsample=4, n_blocks=2, rng=None, scale=0.1):
        rng = np.random.default_rng(rng)
        p = cls.zeros(bins, channels, downsample, n_blocks)
        r = lambda wb: (rng.normal(0, scale, wb[0].shape), rng.normal(0, scale, wb[1].shape))
        p.down = [r(wb) for wb in p.down]
        p.hidden = r(p.hidden)
        p.out = r(p.out)
        p.embed = [r(wb) for wb in p.embed]
        p.gate_in = r(p.gate_in)
        p.blocks = [(r(a), r(b)) for a, b in p.blocks]
        return p


def _grid(E):
    return np.asarray(getattr(E, "values", E), dtype=np.float64)


def _strided(x, convs):
    for w, b in convs:
        x = leaky_relu(conv2d(x, w, b, stride=2))
    return x


def recurrent_extract_step(E_i, E_prev, h_prev, params: ExtractorParams):
    """Returns ``(F', h)``; ``E_prev``/``h_prev`` may be ``None`` (zeros)."""
    E_i = _grid(E_i)
    E_prev = np.zeros_like(E_i) if E_prev is None else _grid(E_prev)
    if E_i.shape != E_prev.shape or E_i.ndim != 3 or E_i.shape[0] != 2 * params.bins:
        raise ShapeMismatch(f"voxel grids {E_i.shape}/{E_prev.shape} for B={params.bins}")
    x = _strided(np.concatenate([E_i, E_prev]), params.down)
    if h_prev is None:
        h_prev = np.zeros_like(x)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    if h_prev.shape != x.shape:
        raise ShapeMismatch(f"hidden state {h_prev.shape}, expected {x.shape}")
    h = np.tanh(conv2d(np.concatenate([x, h_prev]), *params.hidden))
    feat = leaky_relu(conv2d(np.concatenate([x, h]), *params.out))
    return feat, h


def keyframe_gate(F_prime, E_t, t: int, schedule: KeyFrameSchedule, params: ExtractorParams):
    """Refresh ``F_prime`` with ``E_t`` when ``t`` is a key frame, else return it as is."""
    if t < 0:
        raise ValidationError(f"frame index must be >= 0, got {t}")
    if t not in schedule:
        return F_prime
    F_prime = np.asarray(F_prime, dtype=np.float64)
    e = _strided(_grid(E_t), params.embed)
    if e.shape != F_prime.shape:
        raise ShapeMismatch(f"embedded grid {e.shape} vs features {F_prime.shape}")
    z = conv2d(np.concatenate([F_prime, e]), *params.gate_in)
    for (w1, b1), (w2, b2) in params.blocks:
        z = z + conv2d(leaky_relu(conv2d(z, w1, b1)), w2, b2)
    return F_prime + z
