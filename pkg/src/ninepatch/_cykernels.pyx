# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel lane.

Twin of ``_npkernels.py``: identical arithmetic in identical order, compiled
with -ffp-contract=off so both lanes stay bit-identical.  Keep in sync.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef double _TAN225 = 0.4142135623730951
cdef double _TAN675 = 2.414213562373095


def convolve_padded(double[:, ::1] padded, double[:, ::1] kernel):
    """Correlate a pre-padded image with *kernel*, valid region only."""
    cdef Py_ssize_t kh = kernel.shape[0]
    cdef Py_ssize_t kw = kernel.shape[1]
    cdef Py_ssize_t h = padded.shape[0] - kh + 1
    cdef Py_ssize_t w = padded.shape[1] - kw + 1
    out_arr = np.zeros((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t y, x, ky, kx
    cdef double acc
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for ky in range(kh):
                for kx in range(kw):
                    acc = acc + kernel[ky, kx] * padded[y + ky, x + kx]
            out[y, x] = acc
    return out_arr


def bilinear_resize(double[:, ::1] img, Py_ssize_t out_h, Py_ssize_t out_w):
    """Corner-aligned bilinear resampling of a 2-D float64 image."""
    cdef Py_ssize_t in_h = img.shape[0]
    cdef Py_ssize_t in_w = img.shape[1]
    out_arr = np.zeros((out_h, out_w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double scale_y = 0.0, scale_x = 0.0
    if in_h > 1 and out_h > 1:
        scale_y = (in_h - 1.0) / (out_h - 1.0)
    if in_w > 1 and out_w > 1:
        scale_x = (in_w - 1.0) / (out_w - 1.0)
    cdef Py_ssize_t y, x, y0, x0, y1, x1
    cdef double sy, sx, fy, fx, top, bot
    for y in range(out_h):
        sy = y * scale_y
        y0 = <Py_ssize_t>sy
        if y0 > in_h - 2:
            y0 = in_h - 2
        if y0 < 0:
            y0 = 0
        fy = sy - y0
        y1 = y0 + 1
        if y1 > in_h - 1:
            y1 = in_h - 1
        for x in range(out_w):
            sx = x * scale_x
            x0 = <Py_ssize_t>sx
            if x0 > in_w - 2:
                x0 = in_w - 2
            if x0 < 0:
                x0 = 0
            fx = sx - x0
            x1 = x0 + 1
            if x1 > in_w - 1:
                x1 = in_w - 1
            top = (1.0 - fx) * img[y0, x0] + fx * img[y0, x1]
            bot = (1.0 - fx) * img[y1, x0] + fx * img[y1, x1]
            out[y, x] = (1.0 - fy) * top + fy * bot
    return out_arr


cdef inline double _mag_at(double[:, ::1] mag, Py_ssize_t y, Py_ssize_t x,
                           Py_ssize_t h, Py_ssize_t w) nogil:
    if y < 0 or y >= h or x < 0 or x >= w:
        return 0.0
    return mag[y, x]


def nonmax_suppress(double[:, ::1] mag, double[:, ::1] gx, double[:, ::1] gy):
    """Keep local maxima of *mag* along the quantized gradient direction."""
    cdef Py_ssize_t h = mag.shape[0]
    cdef Py_ssize_t w = mag.shape[1]
    out_arr = np.zeros((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t y, x
    cdef double ady, adx, fwd, bwd, m
    cdef int dy, dx
    for y in range(h):
        for x in range(w):
            m = mag[y, x]
            ady = -gy[y, x] if gy[y, x] < 0.0 else gy[y, x]
            adx = -gx[y, x] if gx[y, x] < 0.0 else gx[y, x]
            if ady <= adx * _TAN225:
                dy = 0; dx = 1
            elif ady >= adx * _TAN675:
                dy = 1; dx = 0
            elif gx[y, x] * gy[y, x] >= 0.0:
                dy = 1; dx = 1
            else:
                dy = 1; dx = -1
            fwd = _mag_at(mag, y + dy, x + dx, h, w)
            bwd = _mag_at(mag, y - dy, x - dx, h, w)
            if m >= fwd and m > bwd:
                out[y, x] = m
    return out_arr


def hysteresis(strong_mask, weak_mask):
    """Strong pixels plus weak pixels 8-connected to them through weak chains."""
    cdef cnp.uint8_t[:, ::1] strong = np.ascontiguousarray(strong_mask).view(np.uint8)
    cdef cnp.uint8_t[:, ::1] weak = np.ascontiguousarray(weak_mask).view(np.uint8)
    cdef Py_ssize_t h = strong.shape[0]
    cdef Py_ssize_t w = strong.shape[1]
    out_arr = np.zeros((h, w), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] out = out_arr
    stack_arr = np.empty((h * w, 2), dtype=np.intp)
    cdef Py_ssize_t[:, ::1] stack = stack_arr
    cdef Py_ssize_t top = 0
    cdef Py_ssize_t y, x, ny, nx
    cdef int dy, dx
    for y in range(h):
        for x in range(w):
            if strong[y, x]:
                out[y, x] = 1
                stack[top, 0] = y
                stack[top, 1] = x
                top += 1
    while top > 0:
        top -= 1
        y = stack[top, 0]
        x = stack[top, 1]
        for dy in range(-1, 2):
            for dx in range(-1, 2):
                if dy == 0 and dx == 0:
                    continue
                ny = y + dy
                nx = x + dx
                if ny < 0 or ny >= h or nx < 0 or nx >= w:
                    continue
                if weak[ny, nx] and not out[ny, nx]:
                    out[ny, nx] = 1
                    stack[top, 0] = ny
                    stack[top, 1] = nx
                    top += 1
    return out_arr.astype(bool)
