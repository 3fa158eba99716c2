"""Reconstruction metrics: RMSE, SSIM and temporal consistency (TC).

RMSE and SSIM run on images normalized to ``[0, 1]``, either tone-mapped
(default) or linear; TC always runs on linear radiance because it
compares against event-derived log-intensity changes.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import convolve2d

from . import _backend
from .errors import GeometryMismatch, ImageTooSmall, LengthMismatch
from .esim import SimConfig
from .hdr import tone_curve
from .kernels.losses import temporal_consistency_terms

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise GeometryMismatch(f"images differ in shape: {a.shape} vs {b.shape}")
    return a, b


def rmse(a, b) -> float:
    a, b = _pair(a, b)
    return math.sqrt(float(np.mean((a - b) ** 2)))


def gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r ** 2) / (2 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def ssim(a, b) -> float:
    """Mean SSIM over all full 11x11 Gaussian windows (unit dynamic range)."""
    a, b = _pair(a, b)
    if a.ndim != 2 or min(a.shape) < SSIM_WINDOW:
        raise ImageTooSmall(f"SSIM needs 2-D images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {a.shape}")
    win = gaussian_window()

    def filt(x):
        return convolve2d(x, win, mode="valid")

    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a ** 2
    var_b = filt(b * b) - mu_b ** 2
    cov = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_a ** 2 + mu_b ** 2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return float(np.mean(num / den))


def tc_metric(recon, grids, cfg: SimConfig = SimConfig()) -> float:
    """Mean over intervals of the mean squared grid discrepancy."""
    recon = np.asarray(recon, dtype=np.float64)
    if len(recon) < 2:
        raise LengthMismatch("TC needs at least 2 frames")
    return float(np.mean(temporal_consistency_terms(recon, grids, cfg)))


@dataclass
class MetricsReport:
    rows: list  # dicts: frame, rmse, ssim, tc (tc is None for frame 0)
    summary: dict
    metadata: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["frame", "rmse", "ssim", "tc"])
        fmt = lambda v: "" if v is None else repr(float(v))
        for r in self.rows + [self.summary]:
            w.writerow([r["frame"], fmt(r["rmse"]), fmt(r["ssim"]), fmt(r["tc"])])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {"metadata": self.metadata, "frames": self.rows, "summary": self.summary}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def evaluate_sequences(recon, truth, grids, cfg: SimConfig = SimConfig(), *,
                       domain="tonemapped", sequence_id="sequence") -> MetricsReport:
    """Per-frame RMSE/SSIM/TC plus a ``mean`` summary row.

    ``recon`` and ``truth`` are linear radiance sequences in ``[0, 1]``;
    ``grids`` holds one voxel grid per consecutive recon pair; with
    ``grids=None`` the TC column is left empty.
    """
    recon = np.asarray(recon, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if recon.shape[0] != truth.shape[0]:
        raise LengthMismatch(f"{len(recon)} reconstructed vs {len(truth)} ground-truth frames")
    if recon.shape != truth.shape:
        raise GeometryMismatch(f"reconstruction {recon.shape[1:]} vs truth {truth.shape[1:]}")
    if domain not in ("tonemapped", "linear"):
        raise ValueError(f"unknown metric domain {domain!r}")
    view = tone_curve if domain == "tonemapped" else (lambda x: x)

    def frame_metrics(k):
        a, b = view(recon[k]), view(truth[k])
        return rmse(a, b), ssim(a, b)

    n = len(recon)
    workers = min(_backend.thread_count(), max(n, 1))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_frame = list(pool.map(frame_metrics, range(n)))
    else:
        per_frame = [frame_metrics(k) for k in range(n)]
    tcs = temporal_consistency_terms(recon, grids, cfg) if grids is not None and n >= 2 else []

    rows = []
    for k, (r, s) in enumerate(per_frame):
        rows.append({"frame": k, "rmse": r, "ssim": s, "tc": tcs[k - 1] if k and tcs else None})
    summary = {
        "frame": "mean",
        "rmse": float(np.mean([r["rmse"] for r in rows])) if rows else None,
        "ssim": float(np.mean([r["ssim"] for r in rows])) if rows else None,
        "tc": float(np.mean(tcs)) if tcs else None,
    }
    metadata = {
        "sequence_id": sequence_id,
        "frame_count": n,
        "domain": domain,
        "tc_domain": "linear" if tcs else "n/a",
        "lpips": "n/a",
        "sim": {"S_pos": cfg.threshold_pos, "S_neg": cfg.threshold_neg, "log_eps": cfg.log_eps},
    }
    return MetricsReport(rows, summary, metadata)
