"""Key-matching local attention over ``T = 2N + 1`` aligned feature maps.

For output pixel ``p = (m, n)`` the candidates are every frame ``i`` and
every location ``p + o`` with ``|o|_inf <= radius`` that lies inside the
image.  Candidate logits are plain dot products (no ``1/sqrt(D)``)

    A[i, o, p] = K_i(p) . K_c(p + o)           (c = center frame)

normalized with one softmax over all candidates of ``p``; the output is
``sum_{i,o} P[i, o, p] * F_i(p + o)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import EmptyWindow, ShapeMismatch, ValidationError


@dataclass(eq=False)
class AttentionSpec:
    key_weight: np.ndarray = field(repr=False)  # (D, C)
    key_bias: Optional[np.ndarray] = field(default=None, repr=False)
    radius: int = 2
    n_frames: int = 3

    def __post_init__(self):
        self.key_weight = np.asarray(self.key_weight, dtype=np.float64)
        if self.key_weight.ndim != 2 or self.key_weight.shape[0] < 1:
            raise ValidationError("key_weight must be (D, C) with D >= 1")
        if self.n_frames < 1 or self.n_frames % 2 == 0:
            raise ValidationError("attention window count must be odd")
        if self.radius < 0:
            raise EmptyWindow(f"attention radius must be >= 0, got {self.radius}")

    @property
    def key_dim(self) -> int:
        return self.key_weight.shape[0]

    @classmethod
    def random(cls, channels, key_dim=8, radius=2, n_frames=3, rng=None, scale=0.3):
        rng = np.random.default_rng(rng)
        return cls(rng.normal(0, scale, (key_dim, channels)), np.zeros(key_dim), radius, n_frames)


def project_keys(features, spec: AttentionSpec) -> np.ndarray:
    """Per-pixel linear key projection, ``(T, C, H, W)`` -> ``(T, D, H, W)``."""
    keys = np.einsum("dc,tchw->tdhw", spec.key_weight, features)
    if spec.key_bias is not None:
        keys = keys + np.asarray(spec.key_bias)[None, :, None, None]
    return keys


def window_offsets(radius, h, w):
    if radius < 0:
        raise EmptyWindow(f"attention radius must be >= 0, got {radius}")
    r = min(int(radius), max(h, w) - 1)
    return [(du, dv) for du in range(-r, r + 1) for dv in range(-r, r + 1)]


def shift(x, du, dv):
    """``y[..., m, n] = x[..., m + du, n + dv]`` (zero outside) and the
    in-bounds mask."""
    h, w = x.shape[-2:]
    y = np.zeros_like(x)
    mask = np.zeros((h, w), dtype=bool)
    ys = slice(max(0, -du), min(h, h - du))
    xs = slice(max(0, -dv), min(w, w - dv))
    ys_src = slice(max(0, du), min(h, h + du))
    xs_src = slice(max(0, dv), min(w, w + dv))
    if ys.start < ys.stop and xs.start < xs.stop:
        y[..., ys, xs] = x[..., ys_src, xs_src]
        mask[ys, xs] = True
    return y, mask


def unshift(x, du, dv):
    """Adjoint of :func:`shift` (moves values back to their source pixels)."""
    return shift(x, -du, -dv)[0]


def attention_logits(keys, center, radius):
    """Logits ``(T, O, H, W)``, validity mask ``(O, H, W)`` and the offsets."""
    keys = np.asarray(keys, dtype=np.float64)
    _, _, h, w = keys.shape
    offs = window_offsets(radius, h, w)
    logits = np.empty((keys.shape[0], len(offs), h, w))
    valid = np.empty((len(offs), h, w), dtype=bool)
    for k, (du, dv) in enumerate(offs):
        kc, m = shift(keys[center], du, dv)
        logits[:, k] = np.einsum("tdhw,dhw->thw", keys, kc)
        valid[k] = m
    return logits, valid, offs


def softmax_candidates(logits, valid):
    """Softmax over axes (frame, offset) with invalid candidates excluded."""
    masked = np.where(valid[None], logits, -np.inf)
    top = masked.max(axis=(0, 1), keepdims=True)
    e = np.where(valid[None], np.exp(masked - top), 0.0)
    return e / e.sum(axis=(0, 1), keepdims=True)


def attention_probabilities(keys, center, radius):
    logits, valid, offs = attention_logits(keys, center, radius)
    return softmax_candidates(logits, valid), offs


def _check_features(features, spec):
    F = np.asarray(features, dtype=np.float64)
    if F.ndim != 4:
        raise ShapeMismatch("features must be (T, C, H, W)")
    if F.shape[0] != spec.n_frames:
        raise ShapeMismatch(f"{F.shape[0]} feature maps for a {spec.n_frames}-frame window")
    if F.shape[1] != spec.key_weight.shape[1]:
        raise ShapeMismatch(f"{F.shape[1]} channels, key projector expects {spec.key_weight.shape[1]}")
    return F


def fuse_values(features, P, offs):
    out = np.zeros(features.shape[1:])
    for k, (du, dv) in enumerate(offs):
        v, _ = shift(features, du, dv)  # (T, C, H, W)
        out += np.einsum("thw,tchw->chw", P[:, k], v)
    return out


def attend(features, keys, center, radius):
    """Fuse ``features`` with given ``keys``; returns ``(output, P, offsets)``."""
    P, offs = attention_probabilities(keys, center, radius)
    return fuse_values(np.asarray(features, dtype=np.float64), P, offs), P, offs


def local_attention_fuse(features, spec: AttentionSpec, return_probabilities=False):
    """Fuse ``T`` aligned feature maps ``(T, C, H, W)`` into one ``(C, H, W)``."""
    F = _check_features(features, spec)
    keys = project_keys(F, spec)
    out, P, offs = attend(F, keys, spec.n_frames // 2, spec.radius)
    if return_probabilities:
        return out, P, offs
    return out


def attend_keys_vjp(features, keys, center, radius, grad_out):
    """Gradient of ``sum(grad_out * attend(features, keys)[0])`` w.r.t. ``keys``."""
    F = np.asarray(features, dtype=np.float64)
    keys = np.asarray(keys, dtype=np.float64)
    g = np.asarray(grad_out, dtype=np.float64)
    P, offs = attention_probabilities(keys, center, radius)
    gP = np.empty_like(P)
    for k, (du, dv) in enumerate(offs):
        v, _ = shift(F, du, dv)
        gP[:, k] = np.einsum("chw,tchw->thw", g, v)
    return probabilities_vjp(keys, center, radius, P, offs, gP)


def probabilities_vjp(keys, center, radius, P, offs, gP):
    """Pull a cotangent on the probabilities back to the keys."""
    gA = P * (gP - (P * gP).sum(axis=(0, 1), keepdims=True))
    grad = np.zeros_like(keys)
    for k, (du, dv) in enumerate(offs):
        kc, _ = shift(keys[center], du, dv)
        grad += gA[:, k][:, None] * kc[None]
        grad[center] += unshift(np.einsum("thw,tdhw->dhw", gA[:, k], keys), du, dv)
    return grad
