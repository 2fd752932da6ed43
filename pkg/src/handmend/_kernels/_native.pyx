# cython: language_level=3
"""Compiled per-pixel kernels: bilinear uint16 warping and windowed SSIM maps.

Kept formula-identical to handmend._kernels.pure so either backend satisfies
the same contracts.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


def warp_bilinear_u16(const cnp.uint16_t[:, ::1] src, const double[:, ::1] lin,
                      const double[::1] off, Py_ssize_t out_h, Py_ssize_t out_w):
    cdef Py_ssize_t h = src.shape[0]
    cdef Py_ssize_t w = src.shape[1]
    out_np = np.zeros((out_h, out_w), dtype=np.uint16)
    cdef cnp.uint16_t[:, ::1] out = out_np
    cdef double a = lin[0, 0], b = lin[0, 1], c = lin[1, 0], d = lin[1, 1]
    cdef double ox = off[0], oy = off[1]
    cdef Py_ssize_t x, y, x0, y0
    cdef double sx, sy, fx, fy, v00, v10, v01, v11, top, bottom, value

    with nogil:
        for y in range(out_h):
            for x in range(out_w):
                sx = a * x + b * y + ox
                sy = c * x + d * y + oy
                x0 = <Py_ssize_t>floor(sx)
                y0 = <Py_ssize_t>floor(sy)
                fx = sx - x0
                fy = sy - y0
                v00 = src[y0, x0] if 0 <= x0 < w and 0 <= y0 < h else 0.0
                v10 = src[y0, x0 + 1] if 0 <= x0 + 1 < w and 0 <= y0 < h else 0.0
                v01 = src[y0 + 1, x0] if 0 <= x0 < w and 0 <= y0 + 1 < h else 0.0
                v11 = src[y0 + 1, x0 + 1] if 0 <= x0 + 1 < w and 0 <= y0 + 1 < h else 0.0
                top = (1.0 - fx) * v00 + fx * v10
                bottom = (1.0 - fx) * v01 + fx * v11
                value = (1.0 - fy) * top + fy * bottom
                out[y, x] = <cnp.uint16_t>floor(value + 0.5)
    return out_np


cdef void _filter_valid(const double[:, ::1] img, const double[::1] kernel,
                        double[:, ::1] scratch, double[:, ::1] out) nogil:
    # Horizontal pass into scratch (H, W-n+1), then vertical into out.
    cdef Py_ssize_t h = img.shape[0]
    cdef Py_ssize_t w = img.shape[1]
    cdef Py_ssize_t n = kernel.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double acc
    for i in range(h):
        for j in range(w - n + 1):
            acc = 0.0
            for k in range(n):
                acc += img[i, j + k] * kernel[k]
            scratch[i, j] = acc
    for i in range(h - n + 1):
        for j in range(w - n + 1):
            acc = 0.0
            for k in range(n):
                acc += scratch[i + k, j] * kernel[k]
            out[i, j] = acc


def ssim_map(const double[:, ::1] x, const double[:, ::1] y,
             const double[::1] kernel, double c1, double c2):
    cdef Py_ssize_t h = x.shape[0]
    cdef Py_ssize_t w = x.shape[1]
    cdef Py_ssize_t n = kernel.shape[0]
    cdef Py_ssize_t oh = h - n + 1
    cdef Py_ssize_t ow = w - n + 1

    xx_np = np.multiply(x, x)
    yy_np = np.multiply(y, y)
    xy_np = np.multiply(x, y)
    scratch_np = np.empty((h, ow), dtype=np.float64)
    mu_x_np = np.empty((oh, ow), dtype=np.float64)
    mu_y_np = np.empty((oh, ow), dtype=np.float64)
    e_xx_np = np.empty((oh, ow), dtype=np.float64)
    e_yy_np = np.empty((oh, ow), dtype=np.float64)
    e_xy_np = np.empty((oh, ow), dtype=np.float64)
    out_np = np.empty((oh, ow), dtype=np.float64)

    cdef double[:, ::1] xx = xx_np, yy = yy_np, xy = xy_np
    cdef double[:, ::1] scratch = scratch_np
    cdef double[:, ::1] mu_x = mu_x_np, mu_y = mu_y_np
    cdef double[:, ::1] e_xx = e_xx_np, e_yy = e_yy_np, e_xy = e_xy_np
    cdef double[:, ::1] out = out_np
    cdef Py_ssize_t i, j
    cdef double sx, sy, sxy, numerator, denominator

    with nogil:
        _filter_valid(x, kernel, scratch, mu_x)
        _filter_valid(y, kernel, scratch, mu_y)
        _filter_valid(xx, kernel, scratch, e_xx)
        _filter_valid(yy, kernel, scratch, e_yy)
        _filter_valid(xy, kernel, scratch, e_xy)
        for i in range(oh):
            for j in range(ow):
                sx = e_xx[i, j] - mu_x[i, j] * mu_x[i, j]
                sy = e_yy[i, j] - mu_y[i, j] * mu_y[i, j]
                sxy = e_xy[i, j] - mu_x[i, j] * mu_y[i, j]
                numerator = (2.0 * mu_x[i, j] * mu_y[i, j] + c1) * (2.0 * sxy + c2)
                denominator = (mu_x[i, j] * mu_x[i, j] + mu_y[i, j] * mu_y[i, j] + c1) * (sx + sy + c2)
                out[i, j] = numerator / denominator
    return out_np
