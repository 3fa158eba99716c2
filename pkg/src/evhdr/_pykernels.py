"""Numpy implementations of the hot kernels.

These mirror ``_ckernels.pyx`` operation for operation; the two backends
must agree bit for bit, so keep the floating-point expressions in the same
order when editing either file.
"""
import numpy as np

NAME = "python"

# voxel weights are rounded to multiples of 2**-32 so that per-event pair
# sums and whole-grid totals are exact in float64
_FRAC_SCALE = 4294967296.0


def simulate_log_frames(log_frames, times, s_pos, s_neg, tol):
    """Threshold-crossing events of a per-pixel linear log-intensity ramp.

    Returns unsorted ``(t, x, y, q)`` columns plus the final per-pixel
    reference level and last event time.
    """
    log_frames = np.ascontiguousarray(log_frames, dtype=np.float64)
    times = np.ascontiguousarray(times, dtype=np.int64)
    n_frames, h, w = log_frames.shape
    ref = log_frames[0].reshape(-1).copy()
    last_t = np.full(h * w, times[0], dtype=np.int64)
    pix = np.arange(h * w, dtype=np.int64)

    out_t, out_p, out_q = [], [], []
    for k in range(n_frames - 1):
        l0 = log_frames[k].reshape(-1)
        l1 = log_frames[k + 1].reshape(-1)
        t0 = float(times[k])
        dt = float(times[k + 1] - times[k])
        d = l1 - l0
        for sign, s in ((1, s_pos), (-1, s_neg)):
            if sign > 0:
                n = np.floor((l1 - ref + tol) / s)
            else:
                n = np.floor((ref - l1 + tol) / s)
            n = np.where(n > 0, n, 0).astype(np.int64)
            total = int(n.sum())
            if total == 0:
                continue
            idx = np.repeat(pix, n)
            kk = (np.arange(total) - np.repeat(np.cumsum(n) - n, n) + 1).astype(np.float64)
            if sign > 0:
                level = ref[idx] + kk * s
            else:
                level = ref[idx] - kk * s
            dd = d[idx]
            safe = np.where(dd != 0, dd, 1.0)
            frac = np.where(dd != 0, (level - l0[idx]) / safe, 0.0)
            frac = np.minimum(np.maximum(frac, 0.0), 1.0)
            ts = np.floor(t0 + frac * dt + 0.5).astype(np.int64)
            out_t.append(ts)
            out_p.append(idx)
            out_q.append(np.full(total, sign, dtype=np.int8))
            moved = n > 0
            nf = n[moved].astype(np.float64)
            if sign > 0:
                ref[moved] = ref[moved] + nf * s
            else:
                ref[moved] = ref[moved] - nf * s
            np.maximum.at(last_t, idx, ts)

    if out_t:
        t = np.concatenate(out_t)
        p = np.concatenate(out_p)
        q = np.concatenate(out_q)
    else:
        t = np.zeros(0, np.int64)
        p = np.zeros(0, np.int64)
        q = np.zeros(0, np.int8)
    x = (p % w).astype(np.int32)
    y = (p // w).astype(np.int32)
    return t, x, y, q, ref.reshape(h, w), last_t.reshape(h, w)


def accumulate_spikes(x, y, q, tstar, n_bins, height, width):
    """Tent-kernel deposit of events into a ``(2B, H, W)`` grid."""
    tstar = np.asarray(tstar, dtype=np.float64)
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    q = np.asarray(q)
    lo = np.floor(tstar)
    frac = tstar - lo
    frac = np.floor(frac * _FRAC_SCALE + 0.5) / _FRAC_SCALE
    lo = lo.astype(np.int64)
    carry = frac >= 1.0
    lo[carry] += 1
    frac[carry] = 0.0
    ch = lo + np.where(q < 0, n_bins, 0)
    plane = height * width
    flat = ch * plane + y * width + x
    size = 2 * n_bins * plane
    grid = np.bincount(flat, weights=1.0 - frac, minlength=size)
    has_right = frac > 0
    grid += np.bincount(flat[has_right] + plane, weights=frac[has_right], minlength=size)
    return grid.reshape(2 * n_bins, height, width)


def bilinear_gather(img, py, px):
    """Zero-padded bilinear lookup of ``img[..., H, W]`` at float coordinates."""
    h, w = img.shape[-2:]
    y0 = np.floor(py)
    x0 = np.floor(px)
    wy = py - y0
    wx = px - x0
    y0 = y0.astype(np.int64)
    x0 = x0.astype(np.int64)
    y1 = y0 + 1
    x1 = x0 + 1

    def corner(yy, xx):
        ok = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        v = img[..., np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)]
        return np.where(ok, v, 0.0)

    f00 = corner(y0, x0)
    f01 = corner(y0, x1)
    f10 = corner(y1, x0)
    f11 = corner(y1, x1)
    return (
        (1.0 - wy) * (1.0 - wx) * f00
        + (1.0 - wy) * wx * f01
        + wy * (1.0 - wx) * f10
        + wy * wx * f11
    )


def deform_sample(feat, offsets, ky, kx):
    """Columns ``(C, K, H, W)`` of ``feat`` sampled at grid + offset positions."""
    feat = np.ascontiguousarray(feat, dtype=np.float64)
    offsets = np.ascontiguousarray(offsets, dtype=np.float64)
    _, h, w = feat.shape
    gy, gx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    ky = np.asarray(ky, dtype=np.float64)[:, None, None]
    kx = np.asarray(kx, dtype=np.float64)[:, None, None]
    py = gy[None] + ky + offsets[:, 0]
    px = gx[None] + kx + offsets[:, 1]
    return bilinear_gather(feat, py, px)
