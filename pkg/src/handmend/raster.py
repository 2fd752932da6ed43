"""Images, binary masks, and the mask algebra behind restoration regions.

PNG conventions: masks are 8-bit single-channel (0 clear, 255 set), depth
images are 16-bit single-channel (0 background, larger is nearer), and
photographs are 8-bit RGB.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import _kernels
from .geometry import SimilarityTransform


class DimensionMismatch(Exception):
    """Operands must share pixel dimensions."""


class EmptyIntersection(Exception):
    """Bounding box lies fully outside the image."""


class EmptyMask(Exception):
    """Operation needs at least one set pixel."""


class BothEmpty(Exception):
    """IoU of two empty masks is undefined."""


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned pixel rectangle, top-left origin, inclusive of width x height pixels."""

    x: int
    y: int
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"bounding box must be at least 1x1, got {self.width}x{self.height}")


@dataclass(frozen=True, eq=False)
class BinaryMask:
    bits: np.ndarray  # bool, (height, width)

    def __post_init__(self) -> None:
        if self.bits.ndim != 2 or self.bits.dtype != np.bool_:
            raise ValueError("mask bits must be a 2-D bool array")
        object.__setattr__(self, "bits", np.ascontiguousarray(self.bits))

    @classmethod
    def zeros(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    def count(self) -> int:
        return int(self.bits.sum())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.bits.shape == other.bits.shape and bool(np.array_equal(self.bits, other.bits))


@dataclass(frozen=True, eq=False)
class DepthImage:
    depth: np.ndarray  # uint16, (height, width); 0 = background

    def __post_init__(self) -> None:
        if self.depth.ndim != 2 or self.depth.dtype != np.uint16:
            raise ValueError("depth must be a 2-D uint16 array")
        object.__setattr__(self, "depth", np.ascontiguousarray(self.depth))

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DepthImage):
            return NotImplemented
        return self.depth.shape == other.depth.shape and bool(np.array_equal(self.depth, other.depth))


@dataclass(frozen=True, eq=False)
class RgbImage:
    pixels: np.ndarray  # uint8, (height, width, 3)

    def __post_init__(self) -> None:
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3 or self.pixels.dtype != np.uint8:
            raise ValueError("pixels must be a (H, W, 3) uint8 array")
        object.__setattr__(self, "pixels", np.ascontiguousarray(self.pixels))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RgbImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(
            np.array_equal(self.pixels, other.pixels)
        )


def _require_same_shape(a, b) -> None:
    if (a.height, a.width) != (b.height, b.width):
        raise DimensionMismatch(
            f"dimensions differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )


def bbox_to_mask(b: BoundingBox, width: int, height: int) -> BinaryMask:
    """Rasterize a bounding box, clamped to the image rectangle."""
    x0 = max(b.x, 0)
    y0 = max(b.y, 0)
    x1 = min(b.x + b.width, width)
    y1 = min(b.y + b.height, height)
    if x1 <= x0 or y1 <= y0:
        raise EmptyIntersection(f"box {b} does not intersect a {width}x{height} image")
    bits = np.zeros((height, width), dtype=bool)
    bits[y0:y1, x0:x1] = True
    return BinaryMask(bits)


def union(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    _require_same_shape(a, b)
    return BinaryMask(a.bits | b.bits)


def silhouette(d: DepthImage) -> BinaryMask:
    """Mask of pixels with nonzero depth."""
    return BinaryMask(d.depth > 0)


def iou(a: BinaryMask, b: BinaryMask) -> float:
    _require_same_shape(a, b)
    intersection = int((a.bits & b.bits).sum())
    union_count = int((a.bits | b.bits).sum())
    if union_count == 0:
        raise BothEmpty("IoU of two empty masks is undefined")
    return intersection / union_count


def mask_bbox(m: BinaryMask) -> BoundingBox:
    """Tight axis-aligned box around all set pixels."""
    ys, xs = np.nonzero(m.bits)
    if ys.size == 0:
        raise EmptyMask("mask has no set pixels")
    x0 = int(xs.min())
    y0 = int(ys.min())
    return BoundingBox(x0, y0, int(xs.max()) - x0 + 1, int(ys.max()) - y0 + 1)


def scale_mask(m: BinaryMask, factor: float) -> BinaryMask:
    """Scale the set region about its bounding-box center, clamped to bounds.

    Nearest-neighbor inverse mapping keeps rectangles rectangular, so a
    centered k x k box scales to round(k * factor) on each side.
    """
    if not 0.5 <= factor <= 2.0:
        raise ValueError(f"scale factor {factor} outside [0.5, 2.0]")
    if factor == 1.0:
        return m
    box = mask_bbox(m)  # raises EmptyMask
    cx = box.x + (box.width - 1) / 2.0
    cy = box.y + (box.height - 1) / 2.0

    ys, xs = np.mgrid[0 : m.height, 0 : m.width]
    src_x = np.floor(cx + (xs - cx) / factor + 0.5).astype(np.int64)
    src_y = np.floor(cy + (ys - cy) / factor + 0.5).astype(np.int64)
    inside = (src_x >= 0) & (src_x < m.width) & (src_y >= 0) & (src_y < m.height)
    bits = np.zeros_like(m.bits)
    bits[inside] = m.bits[src_y[inside], src_x[inside]]
    return BinaryMask(bits)


def warp_depth(
    template: DepthImage, t: SimilarityTransform, out_width: int, out_height: int
) -> DepthImage:
    """Resample a depth template through a similarity transform.

    Inverse mapping with bilinear interpolation; source reads outside the
    template return background (0), never clamp to edge.
    """
    if out_width < 1 or out_height < 1:
        raise ValueError("output dimensions must be positive")
    inv = t.inverse()
    a, b, c, d = inv.linear()
    lin = np.array([[a, b], [c, d]], dtype=np.float64)
    off = np.array([inv.translation.x, inv.translation.y], dtype=np.float64)
    return DepthImage(_kernels.warp_bilinear_u16(template.depth, lin, off, out_height, out_width))


def depth_to_gray(d: DepthImage) -> np.ndarray:
    """Linear 16-bit to 8-bit mapping: 0 -> 0, 65535 -> 255. Returns uint8 (H, W)."""
    return ((d.depth.astype(np.uint32) * 255 + 32767) // 65535).astype(np.uint8)


def paste_depth(base: RgbImage, d: DepthImage, m: BinaryMask) -> RgbImage:
    """Render the depth image in grayscale inside the mask; copy base elsewhere."""
    _require_same_shape(base, d)
    _require_same_shape(base, m)
    gray = depth_to_gray(d)
    out = base.pixels.copy()
    out[m.bits] = gray[m.bits, np.newaxis]
    return RgbImage(out)


# PNG serialization -----------------------------------------------------------


def save_mask(m: BinaryMask, path: str | Path) -> None:
    Image.fromarray(m.bits.astype(np.uint8) * 255, mode="L").save(path, format="PNG")


def load_mask(path: str | Path) -> BinaryMask:
    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"))
    return BinaryMask(arr != 0)


def save_depth(d: DepthImage, path: str | Path) -> None:
    Image.fromarray(d.depth).save(path, format="PNG")


def load_depth(path: str | Path) -> DepthImage:
    with Image.open(path) as img:
        arr = np.asarray(img)
    if arr.ndim != 2:
        raise ValueError(f"{path}: expected a single-channel depth PNG")
    if arr.dtype != np.uint16:
        if np.issubdtype(arr.dtype, np.integer) and arr.min() >= 0 and arr.max() <= 65535:
            arr = arr.astype(np.uint16)
        else:
            raise ValueError(f"{path}: depth values outside the 16-bit range")
    return DepthImage(arr)


def save_rgb(img: RgbImage, path: str | Path) -> None:
    Image.fromarray(img.pixels, mode="RGB").save(path, format="PNG")


def load_rgb(path: str | Path) -> RgbImage:
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"))
    return RgbImage(arr)
