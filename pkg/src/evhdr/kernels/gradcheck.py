"""Central finite-difference checks for the hand-written gradients.

A :class:`GradientCase` wraps a function of one array, its vector-Jacobian
product and (for piecewise-smooth functions) the distance of each input
coordinate to the nearest kink.  Coordinates whose ``+-eps`` probe would
straddle a kink are skipped, or rejected with ``strict=True``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..errors import NonDifferentiablePoint
from .attention import attend, attend_keys_vjp
from .conv import DeformableKernel, deformable_conv2d, deformable_conv2d_vjp, kernel_grid
from .sampling import bilinear_sample, bilinear_sample_vjp


@dataclass
class GradientCase:
    fn: Callable[[np.ndarray], np.ndarray]
    vjp: Callable[[np.ndarray, np.ndarray], np.ndarray]
    x: np.ndarray
    breakpoint_distance: Optional[Callable[[np.ndarray], np.ndarray]] = None


def _frac_distance(c):
    return np.abs(c - np.rint(c))


def finite_difference_check(case: GradientCase, epsilon=1e-6, samples=None, seed=0,
                            floor=1e-3, strict=False) -> float:
    """Max relative error between analytic and central-difference gradients.

    The scalar probed is ``<u, fn(x)>`` for a fixed random cotangent ``u``.
    Relative error is ``|a - n| / max(|a|, |n|, floor)``; ``floor`` keeps
    near-zero derivatives from dominating through round-off.
    """
    rng = np.random.default_rng(seed)
    x = np.array(case.x, dtype=np.float64)
    y = np.asarray(case.fn(x))
    u = rng.standard_normal(y.shape)
    analytic = np.asarray(case.vjp(x, u)).reshape(-1)

    coords = np.arange(x.size)
    if samples is not None and samples < x.size:
        coords = rng.choice(x.size, size=samples, replace=False)
    if case.breakpoint_distance is not None:
        dist = np.asarray(case.breakpoint_distance(x)).reshape(-1)
        near = dist[coords] <= epsilon
        if strict and near.any():
            raise NonDifferentiablePoint(
                f"coordinate {int(coords[near][0])} is within {epsilon} of a breakpoint"
            )
        coords = coords[~near]
    if len(coords) == 0:
        raise NonDifferentiablePoint("every sampled coordinate sits on a breakpoint")

    worst = 0.0
    flat = x.reshape(-1)
    for i in coords:
        keep = flat[i]
        flat[i] = keep + epsilon
        yp = np.asarray(case.fn(x))
        flat[i] = keep - epsilon
        ym = np.asarray(case.fn(x))
        flat[i] = keep
        numeric = float(np.sum(u * (yp - ym))) / (2 * epsilon)
        a = float(analytic[i])
        err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
        worst = max(worst, err)
    return worst


# --- ready-made cases ------------------------------------------------------


def bilinear_points_case(feature, points) -> GradientCase:
    feature = np.asarray(feature, dtype=np.float64)
    return GradientCase(
        fn=lambda p: bilinear_sample(feature, p.reshape(-1, 2)),
        vjp=lambda p, u: bilinear_sample_vjp(feature, p.reshape(-1, 2), u)[1],
        x=np.asarray(points, dtype=np.float64),
        breakpoint_distance=_frac_distance,
    )


def bilinear_feature_case(feature, points) -> GradientCase:
    points = np.asarray(points, dtype=np.float64)
    return GradientCase(
        fn=lambda f: bilinear_sample(f, points),
        vjp=lambda f, u: bilinear_sample_vjp(f, points, u)[0],
        x=np.asarray(feature, dtype=np.float64),
    )


def deform_offsets_case(F, weight, offsets) -> GradientCase:
    F = np.asarray(F, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    kh, kw = weight.shape[2:]
    ky, kx = kernel_grid(kh, kw)
    h, w = F.shape[1:]
    gy, gx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")

    def distance(off):
        py = gy[None] + ky[:, None, None] + off[:, 0]
        px = gx[None] + kx[:, None, None] + off[:, 1]
        return np.stack([_frac_distance(py), _frac_distance(px)], axis=1)

    return GradientCase(
        fn=lambda off: deformable_conv2d(F, DeformableKernel(weight, off)),
        vjp=lambda off, u: deformable_conv2d_vjp(F, DeformableKernel(weight, off), u)[1],
        x=np.asarray(offsets, dtype=np.float64),
        breakpoint_distance=distance,
    )


def deform_input_case(F, weight, offsets) -> GradientCase:
    return GradientCase(
        fn=lambda f: deformable_conv2d(f, DeformableKernel(weight, offsets)),
        vjp=lambda f, u: deformable_conv2d_vjp(f, DeformableKernel(weight, offsets), u)[0],
        x=np.asarray(F, dtype=np.float64),
    )


def attention_keys_case(features, keys, center, radius) -> GradientCase:
    features = np.asarray(features, dtype=np.float64)
    return GradientCase(
        fn=lambda k: attend(features, k, center, radius)[0],
        vjp=lambda k, u: attend_keys_vjp(features, k, center, radius, u),
        x=np.asarray(keys, dtype=np.float64),
    )
