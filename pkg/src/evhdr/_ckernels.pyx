# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; see _pykernels.py for the reference semantics.

Floating-point expressions follow _pykernels.py term for term so both
backends produce identical bits.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()

NAME = "cython"

cdef double _FRAC_SCALE = 4294967296.0


def simulate_log_frames(log_frames, times, double s_pos, double s_neg, double tol):
    cdef const double[:, :, ::1] L = np.ascontiguousarray(log_frames, dtype=np.float64)
    cdef const long long[::1] T = np.ascontiguousarray(times, dtype=np.int64)
    cdef Py_ssize_t nf = L.shape[0], h = L.shape[1], w = L.shape[2]
    cdef Py_ssize_t y, x, k, j
    cdef long long n, count = 0, cap
    cdef double ref, l0, l1, d, t0, dt, level, frac, s
    cdef int sign
    cdef long long ts

    ref_out = np.empty((h, w), dtype=np.float64)
    last_out = np.empty((h, w), dtype=np.int64)
    cdef double[:, ::1] R = ref_out
    cdef long long[:, ::1] LT = last_out

    # first pass counts events so the output can be allocated once
    for y in range(h):
        for x in range(w):
            ref = L[0, y, x]
            for k in range(nf - 1):
                l1 = L[k + 1, y, x]
                n = <long long>floor((l1 - ref + tol) / s_pos)
                if n > 0:
                    count += n
                    ref = ref + (<double>n) * s_pos
                    continue
                n = <long long>floor((ref - l1 + tol) / s_neg)
                if n > 0:
                    count += n
                    ref = ref - (<double>n) * s_neg

    cap = count
    out_t = np.empty(cap, dtype=np.int64)
    out_x = np.empty(cap, dtype=np.int32)
    out_y = np.empty(cap, dtype=np.int32)
    out_q = np.empty(cap, dtype=np.int8)
    cdef long long[::1] OT = out_t
    cdef int[::1] OX = out_x
    cdef int[::1] OY = out_y
    cdef signed char[::1] OQ = out_q

    count = 0
    for y in range(h):
        for x in range(w):
            ref = L[0, y, x]
            LT[y, x] = T[0]
            for k in range(nf - 1):
                l0 = L[k, y, x]
                l1 = L[k + 1, y, x]
                d = l1 - l0
                t0 = <double>T[k]
                dt = <double>(T[k + 1] - T[k])
                sign = 1
                s = s_pos
                n = <long long>floor((l1 - ref + tol) / s_pos)
                if n <= 0:
                    sign = -1
                    s = s_neg
                    n = <long long>floor((ref - l1 + tol) / s_neg)
                if n <= 0:
                    continue
                for j in range(1, n + 1):
                    if sign > 0:
                        level = ref + (<double>j) * s
                    else:
                        level = ref - (<double>j) * s
                    if d != 0:
                        frac = (level - l0) / d
                    else:
                        frac = 0.0
                    if frac < 0.0:
                        frac = 0.0
                    if frac > 1.0:
                        frac = 1.0
                    ts = <long long>floor(t0 + frac * dt + 0.5)
                    OT[count] = ts
                    OX[count] = <int>x
                    OY[count] = <int>y
                    OQ[count] = <signed char>sign
                    count += 1
                    if ts > LT[y, x]:
                        LT[y, x] = ts
                if sign > 0:
                    ref = ref + (<double>n) * s
                else:
                    ref = ref - (<double>n) * s
            R[y, x] = ref
    return out_t, out_x, out_y, out_q, ref_out, last_out


def accumulate_spikes(x, y, q, tstar, int n_bins, int height, int width):
    cdef const long long[::1] X = np.ascontiguousarray(x, dtype=np.int64)
    cdef const long long[::1] Y = np.ascontiguousarray(y, dtype=np.int64)
    cdef const long long[::1] Q = np.ascontiguousarray(q, dtype=np.int64)
    cdef const double[::1] TS = np.ascontiguousarray(tstar, dtype=np.float64)
    grid = np.zeros((2 * n_bins, height, width), dtype=np.float64)
    cdef double[:, :, ::1] G = grid
    cdef Py_ssize_t i, n = TS.shape[0]
    cdef double lo, frac
    cdef long long ch
    for i in range(n):
        lo = floor(TS[i])
        frac = TS[i] - lo
        frac = floor(frac * _FRAC_SCALE + 0.5) / _FRAC_SCALE
        ch = <long long>lo
        if frac >= 1.0:
            ch += 1
            frac = 0.0
        if Q[i] < 0:
            ch += n_bins
        G[ch, Y[i], X[i]] += 1.0 - frac
        if frac > 0:
            G[ch + 1, Y[i], X[i]] += frac
    return grid


cdef inline double _bilinear(const double[:, :, ::1] F, Py_ssize_t c, double py, double px,
                             Py_ssize_t h, Py_ssize_t w) nogil:
    cdef double fy0 = floor(py), fx0 = floor(px)
    cdef double wy = py - fy0, wx = px - fx0
    cdef long long y0 = <long long>fy0, x0 = <long long>fx0
    cdef long long y1 = y0 + 1, x1 = x0 + 1
    cdef double f00 = 0.0, f01 = 0.0, f10 = 0.0, f11 = 0.0
    if 0 <= y0 < h:
        if 0 <= x0 < w:
            f00 = F[c, y0, x0]
        if 0 <= x1 < w:
            f01 = F[c, y0, x1]
    if 0 <= y1 < h:
        if 0 <= x0 < w:
            f10 = F[c, y1, x0]
        if 0 <= x1 < w:
            f11 = F[c, y1, x1]
    return ((1.0 - wy) * (1.0 - wx) * f00
            + (1.0 - wy) * wx * f01
            + wy * (1.0 - wx) * f10
            + wy * wx * f11)


def deform_sample(feat, offsets, ky, kx):
    cdef const double[:, :, ::1] F = np.ascontiguousarray(feat, dtype=np.float64)
    cdef const double[:, :, :, ::1] O = np.ascontiguousarray(offsets, dtype=np.float64)
    cdef const double[::1] KY = np.ascontiguousarray(ky, dtype=np.float64)
    cdef const double[::1] KX = np.ascontiguousarray(kx, dtype=np.float64)
    cdef Py_ssize_t C = F.shape[0], h = F.shape[1], w = F.shape[2], K = O.shape[0]
    out = np.empty((C, K, h, w), dtype=np.float64)
    cdef double[:, :, :, ::1] OUT = out
    cdef Py_ssize_t c, k, i, j
    cdef double py, px
    with nogil:
        for k in range(K):
            for i in range(h):
                for j in range(w):
                    py = (<double>i + KY[k]) + O[k, 0, i, j]
                    px = (<double>j + KX[k]) + O[k, 1, i, j]
                    for c in range(C):
                        OUT[c, k, i, j] = _bilinear(F, c, py, px, h, w)
    return out
