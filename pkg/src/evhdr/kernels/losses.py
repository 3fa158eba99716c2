"""Training objective terms, evaluated as plain numbers.

``total = l1 + tau1 * perceptual + tau2 * tc`` where ``l1`` sums per-frame
mean absolute errors, ``tc`` sums per-interval mean squared differences
between observed voxel grids and the grids implied by consecutive
reconstructed frames, and ``perceptual`` is a pluggable per-frame hook
(zero unless supplied).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from ..errors import GeometryMismatch, LengthMismatch, ValidationError
from ..esim import SimConfig, event_frame_oracle
from ..voxelizer import VoxelGrid, VoxelSpec


@dataclass(frozen=True)
class LossWeights:
    tau1: float = 2.0
    tau2: float = 0.2
    perceptual: Optional[Callable[[np.ndarray, np.ndarray], float]] = None

    def __post_init__(self):
        if self.tau1 < 0 or self.tau2 < 0:
            raise ValidationError("loss weights must be >= 0")


class LossTerms(NamedTuple):
    l1: float
    tc: float
    perceptual: float
    total: float


def _frames(seq):
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim == 2:
        seq = seq[None]
    return seq


def temporal_consistency_terms(recon, grids, cfg: SimConfig) -> list[float]:
    """Mean squared difference per interval between each observed grid and
    the grid implied by the reconstructed frame pair around it."""
    recon = _frames(recon)
    grids = list(grids)
    if len(grids) != len(recon) - 1:
        raise LengthMismatch(f"{len(recon)} frames need {len(recon) - 1} voxel grids, got {len(grids)}")
    out = []
    for k, g in enumerate(grids):
        if not isinstance(g, VoxelGrid):
            raise ValidationError("voxel inputs must be VoxelGrid instances (they carry the time window)")
        c, h, w = g.values.shape
        if (h, w) != recon.shape[1:]:
            raise GeometryMismatch(f"grid {k} is {(h, w)}, frames are {recon.shape[1:]}")
        spec = VoxelSpec((w, h), c // 2)
        t0, dT = g.window
        implied = event_frame_oracle(recon[k], recon[k + 1], cfg, spec, t0=t0, dT=dT)
        out.append(float(np.mean((g.values - implied.values) ** 2)))
    return out


def compute_losses(recon, truth, voxels, cfg: SimConfig = SimConfig(),
                   weights: LossWeights = LossWeights()) -> LossTerms:
    recon = _frames(recon)
    truth = _frames(truth)
    if len(recon) != len(truth):
        raise LengthMismatch(f"{len(recon)} reconstructed vs {len(truth)} ground-truth frames")
    if recon.shape != truth.shape:
        raise GeometryMismatch(f"reconstruction {recon.shape[1:]} vs truth {truth.shape[1:]}")
    l1 = float(sum(np.mean(np.abs(a - b)) for a, b in zip(recon, truth)))
    tc = float(sum(temporal_consistency_terms(recon, voxels, cfg)))
    hook = weights.perceptual
    perceptual = float(sum(hook(a, b) for a, b in zip(recon, truth))) if hook else 0.0
    total = l1 + weights.tau1 * perceptual + weights.tau2 * tc
    return LossTerms(l1, tc, perceptual, total)
