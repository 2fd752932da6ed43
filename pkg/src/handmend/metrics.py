"""Evaluation suite: pose/classifier confidence means, masked PSNR/SSIM, Pearson.

The masked metrics score preservation of the image outside the restoration
region: PSNR excludes masked pixels, SSIM excludes every window that touches
the mask. Aggregation order is fixed (sequential, record order) so results
reproduce bit for bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import _kernels
from .raster import BinaryMask, DimensionMismatch, RgbImage

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DYNAMIC_RANGE = 255.0

# ITU-R BT.601 luma weights.
_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float64)


class EmptyDataset(Exception):
    pass


class EmptyRecord(Exception):
    def __init__(self, hand_id: str):
        super().__init__(f"hand {hand_id!r} has no keypoint confidences")
        self.hand_id = hand_id


class MaskCoversImage(Exception):
    pass


class NoValidWindows(Exception):
    pass


class LengthMismatch(Exception):
    pass


class ZeroVariance(Exception):
    pass


@dataclass(frozen=True)
class HandPoseRecord:
    """Per-hand keypoint confidences, keyed by landmark id."""

    hand_id: str
    keypoint_confidences: Mapping[int, float]

    def __post_init__(self) -> None:
        for lid, conf in self.keypoint_confidences.items():
            if not 0.0 <= conf <= 1.0:
                raise ValueError(f"hand {self.hand_id!r} keypoint {lid}: confidence {conf} outside [0, 1]")


@dataclass(frozen=True)
class ClassifierRecord:
    hand_id: str
    confidence: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"hand {self.hand_id!r}: confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class MetricsReport:
    mean_pose_confidence: float
    mean_classifier_confidence: float
    masked_psnr_db: float  # may be math.inf
    masked_ssim: float
    n_hands: int

    def to_dict(self) -> dict:
        return {
            "mean_pose_confidence": self.mean_pose_confidence,
            "mean_classifier_confidence": self.mean_classifier_confidence,
            "masked_psnr_db": "+inf" if math.isinf(self.masked_psnr_db) else self.masked_psnr_db,
            "masked_ssim": self.masked_ssim,
            "n_hands": self.n_hands,
        }


def mean_pose_confidence(records: Sequence[HandPoseRecord]) -> float:
    """Mean over hands of each hand's mean keypoint confidence.

    The outer mean weights every hand equally regardless of how many
    keypoints were detected on it.
    """
    if not records:
        raise EmptyDataset("no pose records")
    total = 0.0
    for record in records:
        confs = list(record.keypoint_confidences.values())
        if not confs:
            raise EmptyRecord(record.hand_id)
        total += sum(confs) / len(confs)
    return total / len(records)


def mean_classifier_confidence(records: Sequence[ClassifierRecord]) -> float:
    if not records:
        raise EmptyDataset("no classifier records")
    return sum(r.confidence for r in records) / len(records)


def masked_psnr(a: RgbImage, b: RgbImage, restored: BinaryMask) -> float:
    """PSNR over pixels outside the restoration mask, pooled across channels.

    Returns +inf when the outside regions are identical; no ceiling applies.
    """
    if (a.height, a.width) != (b.height, b.width):
        raise DimensionMismatch("images differ in size")
    if (a.height, a.width) != (restored.height, restored.width):
        raise DimensionMismatch("mask size differs from images")
    outside = ~restored.bits
    n = int(outside.sum())
    if n == 0:
        raise MaskCoversImage("restoration mask covers every pixel")
    diff = a.pixels.astype(np.float64) - b.pixels.astype(np.float64)
    mse = float((diff[outside] ** 2).sum() / (n * 3))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(DYNAMIC_RANGE * DYNAMIC_RANGE / mse)


def _gaussian_kernel(radius: int, sigma: float) -> np.ndarray:
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


def luma(img: RgbImage) -> np.ndarray:
    """BT.601 luma as float64 in [0, 255]."""
    return img.pixels.astype(np.float64) @ _LUMA


def masked_ssim(a: RgbImage, b: RgbImage, restored: BinaryMask) -> float:
    """Mean SSIM (11x11 Gaussian window, sigma 1.5) over windows clear of the mask.

    Computed on luma with K1=0.01, K2=0.03, L=255. Windows that extend past
    the image border or overlap any masked pixel are excluded.
    """
    if (a.height, a.width) != (b.height, b.width):
        raise DimensionMismatch("images differ in size")
    if (a.height, a.width) != (restored.height, restored.width):
        raise DimensionMismatch("mask size differs from images")
    if a.height < SSIM_WINDOW or a.width < SSIM_WINDOW:
        raise NoValidWindows(f"image smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")

    kernel = _gaussian_kernel(SSIM_WINDOW // 2, SSIM_SIGMA)
    c1 = (SSIM_K1 * DYNAMIC_RANGE) ** 2
    c2 = (SSIM_K2 * DYNAMIC_RANGE) ** 2
    ssim = _kernels.ssim_map(luma(a), luma(b), kernel, c1, c2)

    touched = sliding_window_view(restored.bits, (SSIM_WINDOW, SSIM_WINDOW)).any(axis=(2, 3))
    valid = ~touched
    if not valid.any():
        raise NoValidWindows("every window overlaps the restoration mask")
    return float(ssim[valid].mean())


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Sample Pearson correlation coefficient."""
    if len(xs) != len(ys):
        raise LengthMismatch(f"sequence lengths differ: {len(xs)} vs {len(ys)}")
    if len(xs) < 2:
        raise LengthMismatch("need at least two paired samples")
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    dx = x - x.mean()
    dy = y - y.mean()
    denom = math.sqrt(float((dx * dx).sum()) * float((dy * dy).sum()))
    if denom == 0.0:
        raise ZeroVariance("a constant sequence has no correlation")
    return float((dx * dy).sum()) / denom


# Record file IO (JSON lines) --------------------------------------------------


def load_pose_records(path: str | Path) -> list[HandPoseRecord]:
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        doc = json.loads(line)
        records.append(
            HandPoseRecord(
                str(doc["hand_id"]),
                {int(k): float(v) for k, v in doc["keypoint_confidences"].items()},
            )
        )
    return records


def save_pose_records(records: Iterable[HandPoseRecord], path: str | Path) -> None:
    lines = [
        json.dumps(
            {
                "hand_id": r.hand_id,
                "keypoint_confidences": {str(k): v for k, v in sorted(r.keypoint_confidences.items())},
            },
            sort_keys=True,
        )
        for r in records
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_classifier_records(path: str | Path) -> list[ClassifierRecord]:
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        doc = json.loads(line)
        records.append(ClassifierRecord(str(doc["hand_id"]), float(doc["confidence"])))
    return records


def save_classifier_records(records: Iterable[ClassifierRecord], path: str | Path) -> None:
    lines = [
        json.dumps({"hand_id": r.hand_id, "confidence": r.confidence}, sort_keys=True)
        for r in records
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def format_report_table(rows: Sequence[tuple[str, MetricsReport]]) -> str:
    """Aligned text table: method, c_pose, c_classifier, PSNR (dB), SSIM."""
    header = ("method", "c_pose", "c_classifier", "psnr_db", "ssim")
    cells = [header]
    for name, report in rows:
        psnr = "+inf" if math.isinf(report.masked_psnr_db) else f"{report.masked_psnr_db:.2f}"
        cells.append(
            (
                name,
                f"{report.mean_pose_confidence:.4f}",
                f"{report.mean_classifier_confidence:.4f}",
                psnr,
                f"{report.masked_ssim:.4f}",
            )
        )
    widths = [max(len(row[i]) for row in cells) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip() for row in cells]
    return "\n".join(lines) + "\n"
