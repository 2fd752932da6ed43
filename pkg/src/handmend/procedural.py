"""Bundled synthetic hand templates built from procedural depth shapes.

Three right-hand gestures (spread palm, curved fingers, relaxed pose) are
rendered from capsule and fan primitives so the full pipeline runs without
any external template assets. Prompts avoid naming a side; chirality is
carried by the keypoints and flipped by mirroring.
"""

from __future__ import annotations

import functools
import math

import numpy as np

from .geometry import Handedness, Keypoint, KeypointSet, Point2
from .raster import DepthImage
from .templates import HandTemplate, TemplateLibrary

CANVAS_W = 192
CANVAS_H = 224

_DEPTH_PEAK = 52000.0

# Finger landmark chains in the 21-point topology.
_FINGERS = {
    "thumb": (1, 2, 3, 4),
    "index": (5, 6, 7, 8),
    "middle": (9, 10, 11, 12),
    "ring": (13, 14, 15, 16),
    "pinky": (17, 18, 19, 20),
}

_SEGMENT_FRACTIONS = (0.45, 0.30, 0.25)


def _quantize(v: float) -> float:
    # Multiples of 1/64 are exactly representable, so mirroring (w-1-x) and
    # mirroring back are bitwise involutions on the bundled landmarks.
    return round(v * 64.0) / 64.0


def _finger_chain(
    base: tuple[float, float], angle: float, length: float, curl: float
) -> list[tuple[float, float]]:
    """Joint positions from the base: three segments, bending by curl per joint."""
    points = [base]
    x, y = base
    a = angle
    for frac in _SEGMENT_FRACTIONS:
        x += math.sin(a) * length * frac
        y -= math.cos(a) * length * frac
        points.append((_quantize(x), _quantize(y)))
        a += curl
    return points


def _render(segments: list[tuple[tuple[float, float], tuple[float, float], float, float]]) -> DepthImage:
    """Union of capsules; each is (p0, p1, radius, relative peak) with a rounded profile."""
    ys, xs = np.mgrid[0:CANVAS_H, 0:CANVAS_W].astype(np.float64)
    depth = np.zeros((CANVAS_H, CANVAS_W), dtype=np.float64)
    for (x0, y0), (x1, y1), radius, peak in segments:
        dx = x1 - x0
        dy = y1 - y0
        seg_len_sq = dx * dx + dy * dy
        if seg_len_sq > 0:
            t = np.clip(((xs - x0) * dx + (ys - y0) * dy) / seg_len_sq, 0.0, 1.0)
        else:
            t = 0.0
        px = x0 + t * dx
        py = y0 + t * dy
        dist_sq = (xs - px) ** 2 + (ys - py) ** 2
        profile = peak * np.clip(1.0 - dist_sq / (radius * radius), 0.0, None)
        np.maximum(depth, profile, out=depth)
    return DepthImage(np.round(depth * _DEPTH_PEAK).astype(np.uint16))


def _build_template(
    template_id: str,
    gesture: str,
    prompt: str,
    wrist: tuple[float, float],
    thumb_chain: tuple[tuple[float, float], ...],
    finger_bases: dict[str, tuple[float, float]],
    finger_angles: dict[str, float],
    finger_lengths: dict[str, float],
    curl: float,
) -> HandTemplate:
    landmarks: dict[int, tuple[float, float]] = {0: wrist}
    for lid, pos in zip(_FINGERS["thumb"], thumb_chain):
        landmarks[lid] = pos
    for name in ("index", "middle", "ring", "pinky"):
        chain = _finger_chain(finger_bases[name], finger_angles[name], finger_lengths[name], curl)
        for lid, pos in zip(_FINGERS[name], chain):
            landmarks[lid] = pos

    segments: list[tuple[tuple[float, float], tuple[float, float], float, float]] = []
    # Palm: a fan of wide capsules from the wrist to each finger base, plus the knuckle line.
    for name in ("index", "middle", "ring", "pinky"):
        segments.append((wrist, finger_bases[name], 19.0, 0.74))
    segments.append((finger_bases["index"], finger_bases["pinky"], 15.0, 0.74))
    segments.append((wrist, thumb_chain[0], 15.0, 0.74))
    # Thumb.
    thumb_pts = [landmarks[i] for i in _FINGERS["thumb"]]
    for p0, p1 in zip(thumb_pts, thumb_pts[1:]):
        segments.append((p0, p1, 9.5, 0.92))
    # Fingers, tapering toward the tips.
    for name in ("index", "middle", "ring", "pinky"):
        pts = [landmarks[i] for i in _FINGERS[name]]
        for k, (p0, p1) in enumerate(zip(pts, pts[1:])):
            segments.append((p0, p1, 8.5 - 1.2 * k, 1.0 - 0.05 * k))

    keypoints = KeypointSet(
        tuple(Keypoint(lid, Point2(x, y)) for lid, (x, y) in sorted(landmarks.items()))
    )
    return HandTemplate(
        id=template_id,
        depth=_render(segments),
        keypoints=keypoints,
        handedness=Handedness.RIGHT,
        prompt=prompt,
        gesture_label=gesture,
    )


def _spread_palm() -> HandTemplate:
    return _build_template(
        "palm_spread",
        gesture="spread palm",
        prompt="an open hand with fingers spread apart, palm facing the viewer",
        wrist=(96.0, 200.0),
        thumb_chain=((64.0, 182.0), (46.0, 160.0), (36.0, 142.0), (30.0, 126.0)),
        finger_bases={
            "index": (62.0, 122.0),
            "middle": (86.0, 116.0),
            "ring": (110.0, 118.0),
            "pinky": (132.0, 126.0),
        },
        finger_angles={"index": -0.30, "middle": -0.06, "ring": 0.14, "pinky": 0.38},
        finger_lengths={"index": 66.0, "middle": 76.0, "ring": 70.0, "pinky": 52.0},
        curl=0.0,
    )


def _curved_fingers() -> HandTemplate:
    return _build_template(
        "fingers_curved",
        gesture="curved gesture",
        prompt="a hand with fingers gently curved inward",
        wrist=(96.0, 200.0),
        thumb_chain=((66.0, 182.0), (50.0, 164.0), (42.0, 150.0), (40.0, 138.0)),
        finger_bases={
            "index": (64.0, 124.0),
            "middle": (88.0, 118.0),
            "ring": (110.0, 120.0),
            "pinky": (130.0, 128.0),
        },
        finger_angles={"index": -0.18, "middle": -0.02, "ring": 0.12, "pinky": 0.30},
        finger_lengths={"index": 60.0, "middle": 68.0, "ring": 62.0, "pinky": 46.0},
        curl=0.38,
    )


def _relaxed_pose() -> HandTemplate:
    return _build_template(
        "pose_relaxed",
        gesture="relaxed pose",
        prompt="a relaxed hand with fingers close together",
        wrist=(96.0, 200.0),
        thumb_chain=((66.0, 184.0), (52.0, 168.0), (46.0, 156.0), (44.0, 146.0)),
        finger_bases={
            "index": (68.0, 124.0),
            "middle": (88.0, 120.0),
            "ring": (108.0, 122.0),
            "pinky": (126.0, 128.0),
        },
        finger_angles={"index": -0.10, "middle": 0.0, "ring": 0.10, "pinky": 0.20},
        finger_lengths={"index": 62.0, "middle": 70.0, "ring": 64.0, "pinky": 48.0},
        curl=0.12,
    )


@functools.lru_cache(maxsize=1)
def builtin_library() -> TemplateLibrary:
    """The bundled three-gesture library, rendered once per process."""
    return TemplateLibrary((_spread_palm(), _curved_fingers(), _relaxed_pose()))
