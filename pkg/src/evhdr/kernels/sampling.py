"""Zero-padded bilinear sampling with analytic derivatives.

Coordinates are ``(y, x)`` in pixels; samples outside ``[0, H-1] x [0, W-1]``
blend with zeros.  The sampled value is piecewise bilinear in the
coordinates, so derivatives are exact away from integer coordinates.
"""
import numpy as np

from .._pykernels import bilinear_gather


def _corners(h, w, py, px):
    y0f = np.floor(py)
    x0f = np.floor(px)
    wy = py - y0f
    wx = px - x0f
    y0 = y0f.astype(np.int64)
    x0 = x0f.astype(np.int64)
    out = []
    for dy, dx, wt in ((0, 0, (1 - wy) * (1 - wx)), (0, 1, (1 - wy) * wx),
                       (1, 0, wy * (1 - wx)), (1, 1, wy * wx)):
        yy, xx = y0 + dy, x0 + dx
        ok = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        out.append((np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1), ok, wt))
    return out, wy, wx


def coordinate_gradients(img, py, px):
    """``(dv/dy, dv/dx)`` of bilinear samples of ``img[..., H, W]``."""
    h, w = img.shape[-2:]
    corners, wy, wx = _corners(h, w, py, px)
    f = [np.where(ok, img[..., yy, xx], 0.0) for yy, xx, ok, _ in corners]
    f00, f01, f10, f11 = f
    d_y = (1 - wx) * (f10 - f00) + wx * (f11 - f01)
    d_x = (1 - wy) * (f01 - f00) + wy * (f11 - f10)
    return d_y, d_x


def scatter_to_image(shape, py, px, grad):
    """Adjoint of sampling w.r.t. the image: spread ``grad[..., *P]`` back.

    ``shape`` is ``(C, H, W)``; ``grad`` has shape ``(C, *py.shape)``.
    """
    c, h, w = shape
    out = np.zeros((c, h * w))
    corners, _, _ = _corners(h, w, py, px)
    g = grad.reshape(c, -1)
    for yy, xx, ok, wt in corners:
        ok = ok.reshape(-1)
        flat = (yy * w + xx).reshape(-1)[ok]
        contrib = (g[:, ok] * wt.reshape(-1)[ok])
        for ch in range(c):
            out[ch] += np.bincount(flat, weights=contrib[ch], minlength=h * w)
    return out.reshape(c, h, w)


def _as_chw(feature):
    feature = np.asarray(feature, dtype=np.float64)
    if feature.ndim == 2:
        return feature[None], True
    if feature.ndim == 3:
        return feature, False
    raise ValueError("feature must be (H, W) or (C, H, W)")


def bilinear_sample(feature, points, return_grad=False):
    """Sample ``feature`` at ``points`` (``(N, 2)`` array of ``(y, x)``).

    Returns values of shape ``(N,)`` for a 2-D feature or ``(C, N)`` for a
    3-D one.  With ``return_grad=True`` also returns the derivative of each
    value w.r.t. its point, shape ``(..., N, 2)``.
    """
    f, squeeze = _as_chw(feature)
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    vals = bilinear_gather(f, pts[:, 0], pts[:, 1])
    if not return_grad:
        return vals[0] if squeeze else vals
    d_y, d_x = coordinate_gradients(f, pts[:, 0], pts[:, 1])
    grad = np.stack([d_y, d_x], axis=-1)
    if squeeze:
        return vals[0], grad[0]
    return vals, grad


def bilinear_sample_vjp(feature, points, grad_values):
    """Pull ``grad_values`` back to ``(grad_feature, grad_points)``."""
    f, squeeze = _as_chw(feature)
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    g = np.asarray(grad_values, dtype=np.float64).reshape(f.shape[0], -1)
    gf = scatter_to_image(f.shape, pts[:, 0], pts[:, 1], g)
    d_y, d_x = coordinate_gradients(f, pts[:, 0], pts[:, 1])
    gp = np.stack([(g * d_y).sum(0), (g * d_x).sum(0)], axis=-1)
    return (gf[0] if squeeze else gf), gp


def upsample_bilinear(x, shape):
    """Resize ``(C, h, w)`` to ``(C, H, W)`` with half-pixel centers and edge clamping."""
    x = np.asarray(x, dtype=np.float64)
    _, h, w = x.shape
    H, W = shape

    def axis_weights(n_in, n_out):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0, n_in - 1)
        lo = np.floor(src).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, src - lo

    ylo, yhi, wy = axis_weights(h, H)
    xlo, xhi, wx = axis_weights(w, W)
    rows = x[:, ylo, :] * (1 - wy)[None, :, None] + x[:, yhi, :] * wy[None, :, None]
    return rows[:, :, xlo] * (1 - wx) + rows[:, :, xhi] * wx
