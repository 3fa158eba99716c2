"""Dense and deformable 2-D convolution on ``(C, H, W)`` float64 arrays.

Convolutions are cross-correlations with zero padding, matching the usual
deep-learning convention.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .. import _backend
from .._pykernels import bilinear_gather
from ..errors import ShapeMismatch
from .sampling import coordinate_gradients, scatter_to_image


def leaky_relu(x, slope=0.1):
    return np.where(x > 0, x, slope * x)


def conv2d(x, weight, bias=None, stride=1, padding=None):
    """``(Cin, H, W)`` * ``(Cout, Cin, kh, kw)`` -> ``(Cout, H', W')``.

    ``padding`` defaults to ``kh // 2`` (same-size output at stride 1).
    """
    x = np.asarray(x, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    cout, cin, kh, kw = weight.shape
    if x.ndim != 3 or x.shape[0] != cin:
        raise ShapeMismatch(f"input {x.shape} does not match weight {weight.shape}")
    ph = kh // 2 if padding is None else padding
    pw = kw // 2 if padding is None else padding
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    out = np.tensordot(weight, win, axes=([1, 2, 3], [0, 3, 4]))
    if bias is not None:
        out = out + np.asarray(bias, dtype=np.float64)[:, None, None]
    return out


def kernel_grid(kh, kw):
    """Row-major ``(dy, dx)`` positions of a ``kh x kw`` kernel around its center."""
    ky, kx = np.meshgrid(np.arange(kh) - kh // 2, np.arange(kw) - kw // 2, indexing="ij")
    return ky.reshape(-1).astype(np.float64), kx.reshape(-1).astype(np.float64)


@dataclass(frozen=True, eq=False)
class DeformableKernel:
    """Weights over the regular grid plus per-pixel learned offsets.

    ``weight``: ``(Cout, Cin, kh, kw)``; ``offsets``: ``(K, 2, H, W)`` holding
    ``(dy, dx)`` for each of the ``K = kh * kw`` grid locations.
    """

    weight: np.ndarray = field(repr=False)
    offsets: np.ndarray = field(repr=False)
    bias: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def K(self) -> int:
        return self.weight.shape[2] * self.weight.shape[3]


def _check_deform(F, kernel):
    F = np.asarray(F, dtype=np.float64)
    w = np.asarray(kernel.weight, dtype=np.float64)
    off = np.asarray(kernel.offsets, dtype=np.float64)
    if F.ndim != 3 or w.ndim != 4 or w.shape[1] != F.shape[0]:
        raise ShapeMismatch(f"feature {F.shape} does not match weight {w.shape}")
    K = w.shape[2] * w.shape[3]
    if off.shape != (K, 2) + F.shape[1:]:
        raise ShapeMismatch(f"offsets {off.shape}, expected {(K, 2) + F.shape[1:]}")
    if not np.all(np.isfinite(off)):
        raise ShapeMismatch("offsets must be finite")
    return F, w, off


def deformable_conv2d(F, kernel: DeformableKernel, *, backend=None):
    """Stride-1 deformable convolution; output has the input's geometry."""
    F, w, off = _check_deform(F, kernel)
    cout, cin, kh, kw = w.shape
    ky, kx = kernel_grid(kh, kw)
    kern = backend or _backend.kernels
    cols = kern.deform_sample(F, off, ky, kx)  # (C, K, H, W)
    h, wd = F.shape[1:]
    out = w.reshape(cout, -1) @ cols.reshape(cin * kh * kw, h * wd)
    out = out.reshape(cout, h, wd)
    if kernel.bias is not None:
        out = out + np.asarray(kernel.bias, dtype=np.float64)[:, None, None]
    return out


def deformable_conv2d_vjp(F, kernel: DeformableKernel, grad_out):
    """Gradients of ``sum(grad_out * deformable_conv2d(F, kernel))``.

    Returns ``(grad_F, grad_offsets, grad_weight)``.
    """
    F, w, off = _check_deform(F, kernel)
    cout, cin, kh, kw = w.shape
    K = kh * kw
    h, wd = F.shape[1:]
    g = np.asarray(grad_out, dtype=np.float64).reshape(cout, h * wd)
    ky, kx = kernel_grid(kh, kw)
    gy, gx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(wd, dtype=np.float64), indexing="ij")
    py = gy[None] + ky[:, None, None] + off[:, 0]
    px = gx[None] + kx[:, None, None] + off[:, 1]

    cols = bilinear_gather(F, py, px)  # (C, K, H, W)
    grad_w = (g @ cols.reshape(cin * K, h * wd).T).reshape(w.shape)
    grad_cols = (w.reshape(cout, cin * K).T @ g).reshape(cin, K, h, wd)

    d_y, d_x = coordinate_gradients(F, py, px)  # (C, K, H, W)
    grad_off = np.stack([(grad_cols * d_y).sum(0), (grad_cols * d_x).sum(0)], axis=1)
    grad_F = scatter_to_image(F.shape, py, px, grad_cols)
    return grad_F, grad_off, grad_w
