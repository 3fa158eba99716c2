"""Dual-exposure HDR fusion, its synthetic inverse, and tone mapping.

The rig splits light between a bright camera and a dark camera behind an
ND filter with transmission ``alpha``.  With a linear response, the
bright reading is ``z_b = R`` and the dark reading ``z_d = alpha * R`` in
digital numbers, so each sample gives a radiance estimate ``z / gain``.
Estimates are merged with hat weights; clipped bright samples are dropped.
The result is stored as an integer image where dark-path full scale maps
to ``2**hdr_bit_depth - 1``.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AllSamplesSaturated, BitDepthOverflow, GeometryMismatch, ValidationError
from .event_io import read_pgm, write_pgm

GAMMA = 2.2


@dataclass(frozen=True)
class HdrFusionConfig:
    alpha: float = 0.1
    saturation: float = 0.98
    ldr_bit_depth: int = 12
    hdr_bit_depth: int = 16

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValidationError("fusion.alpha must be in (0, 1)")
        if not 0 < self.saturation <= 1:
            raise ValidationError("fusion.saturation must be in (0, 1]")
        for name in ("ldr_bit_depth", "hdr_bit_depth"):
            if not 8 <= getattr(self, name) <= 16:
                raise ValidationError(f"fusion.{name} must be in 8..16")

    @property
    def ldr_max(self) -> int:
        return 2 ** self.ldr_bit_depth - 1

    @property
    def hdr_max(self) -> int:
        return 2 ** self.hdr_bit_depth - 1

    @property
    def full_scale_radiance(self) -> float:
        """Radiance (bright-camera digital numbers) stored as ``hdr_max``."""
        return self.ldr_max / self.alpha


@dataclass(frozen=True, eq=False)
class HdrFrame:
    values: np.ndarray = field(repr=False)  # uint16, linear
    timestamp: int = 0
    full_scale_radiance: float = 4095 / 0.1
    alpha: float = 0.1
    bit_depth: int = 16
    saturated_count: int = 0

    def radiance(self) -> np.ndarray:
        """Linear radiance as a fraction of full scale, float64 in [0, 1]."""
        return self.values.astype(np.float64) / (2 ** self.bit_depth - 1)


def hat_weight(z, z_max):
    return np.minimum(z, z_max - z) + 1.0


def _check_ldr(img, cfg, name):
    img = np.asarray(img)
    if img.size and (img.min() < 0 or img.max() > cfg.ldr_max):
        raise BitDepthOverflow(f"{name} image outside [0, {cfg.ldr_max}]")
    return img.astype(np.float64)


def fuse_ldr_pair(bright, dark, cfg: HdrFusionConfig = HdrFusionConfig(), *, timestamp: int = 0) -> HdrFrame:
    """Merge a bright/dark LDR pair into one linear HDR frame.

    Pixels where both samples clip are taken from the dark sample and
    counted in ``saturated_count``; an :class:`AllSamplesSaturated`
    warning is issued when any exist.
    """
    b = _check_ldr(bright, cfg, "bright")
    d = _check_ldr(dark, cfg, "dark")
    if b.shape != d.shape:
        raise GeometryMismatch(f"bright {b.shape} vs dark {d.shape}")
    zmax = float(cfg.ldr_max)
    clip = cfg.saturation * zmax
    use_b = b < clip
    use_d = d < clip
    wb = np.where(use_b, hat_weight(b, zmax), 0.0)
    wd = np.where(use_d, hat_weight(d, zmax), 0.0)
    num = wb * b + wd * (d / cfg.alpha)
    den = wb + wd
    both = den == 0
    radiance = np.where(both, d / cfg.alpha, num / np.where(both, 1.0, den))
    n_sat = int(both.sum())
    if n_sat:
        warnings.warn(AllSamplesSaturated(f"{n_sat} pixels saturated in both exposures"), stacklevel=2)
    scaled = radiance / cfg.full_scale_radiance * cfg.hdr_max
    values = np.clip(np.rint(scaled), 0, cfg.hdr_max).astype(np.uint16)
    return HdrFrame(values, int(timestamp), cfg.full_scale_radiance, cfg.alpha,
                    cfg.hdr_bit_depth, n_sat)


def simulate_ldr_pair(radiance, cfg: HdrFusionConfig = HdrFusionConfig()):
    """Noise-free ``(bright, dark)`` readings of radiance given as a fraction
    of dark-path full scale."""
    r = np.asarray(radiance, dtype=np.float64)
    if not np.all(np.isfinite(r)):
        raise ValidationError("radiance must be finite")
    dark = np.rint(np.clip(r, 0.0, 1.0) * cfg.ldr_max)
    bright = np.rint(np.clip(r / cfg.alpha, 0.0, 1.0) * cfg.ldr_max)
    return bright.astype(np.uint16), dark.astype(np.uint16)


def tone_curve(x):
    """Global operator ``(x / (1 + x)) ** (1 / 2.2)`` on normalized radiance."""
    x = np.maximum(np.asarray(x, dtype=np.float64), 0.0)
    return (x / (1.0 + x)) ** (1.0 / GAMMA)


def tone_map(hdr) -> np.ndarray:
    """8-bit display image of an :class:`HdrFrame` (or normalized array)."""
    x = hdr.radiance() if isinstance(hdr, HdrFrame) else np.asarray(hdr, dtype=np.float64)
    return np.clip(np.rint(tone_curve(x) * 255.0), 0, 255).astype(np.uint8)


def write_hdr_frame(frame: HdrFrame, path) -> Path:
    """16-bit PGM plus a ``.json`` sidecar next to it."""
    path = Path(path)
    write_pgm(path, frame.values)
    side = {
        "full_scale_radiance": frame.full_scale_radiance,
        "alpha": frame.alpha,
        "timestamp": frame.timestamp,
    }
    path.with_suffix(".json").write_text(json.dumps(side, indent=2) + "\n", encoding="utf-8")
    return path


def read_hdr_frame(path) -> HdrFrame:
    path = Path(path)
    side = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    return HdrFrame(read_pgm(path), int(side["timestamp"]), float(side["full_scale_radiance"]),
                    float(side["alpha"]))
