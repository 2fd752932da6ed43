"""NumPy implementations of the per-pixel kernels.

Function-for-function twin of handmend._kernels._native; selected when the
compiled extension is unavailable or HANDMEND_KERNELS=python is set.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def warp_bilinear_u16(
    src: np.ndarray, lin: np.ndarray, off: np.ndarray, out_h: int, out_w: int
) -> np.ndarray:
    """Inverse-map ``src`` (uint16, HxW) onto an (out_h, out_w) grid.

    Each output pixel (x, y) samples the source at lin @ (x, y) + off with
    bilinear interpolation; reads outside the source contribute 0. Values are
    rounded with floor(v + 0.5).
    """
    h, w = src.shape
    ys, xs = np.mgrid[0:out_h, 0:out_w]
    sx = lin[0, 0] * xs + lin[0, 1] * ys + off[0]
    sy = lin[1, 0] * xs + lin[1, 1] * ys + off[1]

    x0 = np.floor(sx)
    y0 = np.floor(sy)
    fx = sx - x0
    fy = sy - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)

    def tap(xi: np.ndarray, yi: np.ndarray) -> np.ndarray:
        inside = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
        vals = np.zeros(xi.shape, dtype=np.float64)
        vals[inside] = src[yi[inside], xi[inside]]
        return vals

    v00 = tap(x0, y0)
    v10 = tap(x0 + 1, y0)
    v01 = tap(x0, y0 + 1)
    v11 = tap(x0 + 1, y0 + 1)

    top = (1.0 - fx) * v00 + fx * v10
    bottom = (1.0 - fx) * v01 + fx * v11
    value = (1.0 - fy) * top + fy * bottom
    return np.floor(value + 0.5).astype(np.uint16)


def _filter_valid(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Separable valid-mode correlation: horizontal pass, then vertical."""
    horiz = sliding_window_view(img, kernel.size, axis=1) @ kernel
    return sliding_window_view(horiz, kernel.size, axis=0) @ kernel


def ssim_map(
    x: np.ndarray, y: np.ndarray, kernel: np.ndarray, c1: float, c2: float
) -> np.ndarray:
    """Windowed SSIM map over all fully interior windows.

    ``x`` and ``y`` are float64 single-channel images; ``kernel`` is the 1-D
    half of the separable window, normalized to sum 1. Output shape is
    (H - n + 1, W - n + 1) for an n-tap kernel.
    """
    mu_x = _filter_valid(x, kernel)
    mu_y = _filter_valid(y, kernel)
    e_xx = _filter_valid(x * x, kernel)
    e_yy = _filter_valid(y * y, kernel)
    e_xy = _filter_valid(x * y, kernel)

    sigma_x = e_xx - mu_x * mu_x
    sigma_y = e_yy - mu_y * mu_y
    sigma_xy = e_xy - mu_x * mu_y

    numerator = (2.0 * mu_x * mu_y + c1) * (2.0 * sigma_xy + c2)
    denominator = (mu_x * mu_x + mu_y * mu_y + c1) * (sigma_x + sigma_y + c2)
    return numerator / denominator
