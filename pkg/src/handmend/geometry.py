"""2-D keypoint geometry: points, landmark sets, and similarity transforms.

Landmark ids follow the 21-point hand topology: 0 = wrist, 1-4 thumb,
5-8 index, 9-12 middle, 13-16 ring, 17-20 pinky (base to tip within each
finger). Alignment anchors default to the wrist and the middle-finger
base, the most rotation-stable axis of the topology; chirality is read
from the wrist / index-base / pinky-base triangle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator

WRIST = 0
INDEX_BASE = 5
MIDDLE_BASE = 9
PINKY_BASE = 17
N_LANDMARKS = 21

DEFAULT_ANCHORS = (WRIST, MIDDLE_BASE)

# Anchor pairs closer than this are unusable for scale/angle estimation.
_MIN_ANCHOR_SEPARATION = 1e-6
# Cross products smaller than this make chirality ambiguous.
_MIN_CHIRALITY_CROSS = 1e-9


class DegenerateKeypoints(Exception):
    """Keypoints too degenerate to align: missing, coincident, or collinear."""


class Handedness(Enum):
    LEFT = "left"
    RIGHT = "right"

    def flipped(self) -> "Handedness":
        return Handedness.LEFT if self is Handedness.RIGHT else Handedness.RIGHT


@dataclass(frozen=True)
class Point2:
    """A point in pixel coordinates (x right, y down)."""

    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"point coordinates must be finite, got ({self.x}, {self.y})")

    def __sub__(self, other: "Point2") -> "Point2":
        return Point2(self.x - other.x, self.y - other.y)

    def __add__(self, other: "Point2") -> "Point2":
        return Point2(self.x + other.x, self.y + other.y)

    def norm(self) -> float:
        return math.hypot(self.x, self.y)


@dataclass(frozen=True)
class Keypoint:
    """A detected or annotated hand landmark with its confidence."""

    id: int
    point: Point2
    confidence: float = 1.0

    def __post_init__(self) -> None:
        if not 0 <= self.id < N_LANDMARKS:
            raise ValueError(f"landmark id {self.id} outside 0..{N_LANDMARKS - 1}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class KeypointSet:
    """An ordered collection of landmarks, at most one per landmark id."""

    keypoints: tuple[Keypoint, ...]

    def __post_init__(self) -> None:
        ids = [kp.id for kp in self.keypoints]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate landmark ids in keypoint set")

    @classmethod
    def from_iter(cls, keypoints: Iterable[Keypoint]) -> "KeypointSet":
        return cls(tuple(keypoints))

    @classmethod
    def from_points(cls, points: dict[int, tuple[float, float]], confidence: float = 1.0) -> "KeypointSet":
        return cls(
            tuple(Keypoint(i, Point2(x, y), confidence) for i, (x, y) in sorted(points.items()))
        )

    @property
    def detected_ids(self) -> frozenset[int]:
        return frozenset(kp.id for kp in self.keypoints)

    def __len__(self) -> int:
        return len(self.keypoints)

    def __iter__(self) -> Iterator[Keypoint]:
        return iter(self.keypoints)

    def get(self, landmark_id: int) -> Keypoint | None:
        for kp in self.keypoints:
            if kp.id == landmark_id:
                return kp
        return None

    def point(self, landmark_id: int) -> Point2:
        kp = self.get(landmark_id)
        if kp is None:
            raise KeyError(f"landmark {landmark_id} not detected")
        return kp.point

    def map(self, transform: "SimilarityTransform") -> "KeypointSet":
        """Apply a transform to every landmark, preserving ids and confidences."""
        return KeypointSet(
            tuple(Keypoint(kp.id, transform.apply(kp.point), kp.confidence) for kp in self.keypoints)
        )

    def mirrored_x(self) -> "KeypointSet":
        """Reflect every landmark across the vertical axis x = 0."""
        return KeypointSet(
            tuple(
                Keypoint(kp.id, Point2(-kp.point.x, kp.point.y), kp.confidence)
                for kp in self.keypoints
            )
        )


def _wrap_angle(angle: float) -> float:
    """Normalize to (-pi, pi]; ties at pi resolve to +pi."""
    wrapped = math.fmod(angle, 2.0 * math.pi)
    if wrapped > math.pi:
        wrapped -= 2.0 * math.pi
    elif wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class SimilarityTransform:
    """Similarity map p' = s * R(angle) * F * p + translation.

    F negates x when ``mirror`` is set. Component order is fixed:
    mirror, then scale, then rotate, then translate.
    """

    scale: float = 1.0
    angle: float = 0.0
    translation: Point2 = Point2(0.0, 0.0)
    mirror: bool = False

    def __post_init__(self) -> None:
        if not (math.isfinite(self.scale) and self.scale > 0.0):
            raise ValueError(f"scale must be positive and finite, got {self.scale}")
        if not math.isfinite(self.angle):
            raise ValueError("angle must be finite")
        object.__setattr__(self, "angle", _wrap_angle(self.angle))

    @classmethod
    def identity(cls) -> "SimilarityTransform":
        return cls()

    def linear(self) -> tuple[float, float, float, float]:
        """Row-major 2x2 linear part (a, b, c, d): x' = a x + b y, y' = c x + d y."""
        cos_a = math.cos(self.angle)
        sin_a = math.sin(self.angle)
        fx = -1.0 if self.mirror else 1.0
        s = self.scale
        return (s * cos_a * fx, -s * sin_a, s * sin_a * fx, s * cos_a)

    def apply(self, p: Point2) -> Point2:
        a, b, c, d = self.linear()
        return Point2(
            a * p.x + b * p.y + self.translation.x,
            c * p.x + d * p.y + self.translation.y,
        )

    def compose(self, inner: "SimilarityTransform") -> "SimilarityTransform":
        """Transform equivalent to applying ``inner`` first, then ``self``.

        Uses F R(t) = R(-t) F to keep the result in canonical component order.
        """
        angle = self.angle + (-inner.angle if self.mirror else inner.angle)
        return SimilarityTransform(
            scale=self.scale * inner.scale,
            angle=_wrap_angle(angle),
            translation=self.apply(inner.translation),
            mirror=self.mirror != inner.mirror,
        )

    def inverse(self) -> "SimilarityTransform":
        # L = s R(angle) F  =>  L^-1 = F R(-angle) / s = R(angle) F / s when mirrored.
        inv_scale = 1.0 / self.scale
        inv_angle = self.angle if self.mirror else -self.angle
        bare = SimilarityTransform(inv_scale, inv_angle, Point2(0.0, 0.0), self.mirror)
        t = bare.apply(self.translation)
        return SimilarityTransform(inv_scale, inv_angle, Point2(-t.x, -t.y), self.mirror)


def infer_chirality(kps: KeypointSet) -> Handedness:
    """Classify handedness from the wrist / index-base / pinky-base triangle.

    Convention: a positive z cross product of (index base - wrist) with
    (pinky base - wrist) is a right hand. Mirroring the set flips the result.
    """
    missing = {WRIST, INDEX_BASE, PINKY_BASE} - kps.detected_ids
    if missing:
        raise DegenerateKeypoints(f"chirality needs landmarks 0, 5, 17; missing {sorted(missing)}")
    wrist = kps.point(WRIST)
    v_index = kps.point(INDEX_BASE) - wrist
    v_pinky = kps.point(PINKY_BASE) - wrist
    cross = v_index.x * v_pinky.y - v_index.y * v_pinky.x
    if abs(cross) < _MIN_CHIRALITY_CROSS:
        raise DegenerateKeypoints("wrist, index base, and pinky base are collinear")
    return Handedness.RIGHT if cross > 0 else Handedness.LEFT


def estimate_alignment(
    template_kps: KeypointSet,
    detected_kps: KeypointSet,
    anchors: tuple[int, int] = DEFAULT_ANCHORS,
) -> SimilarityTransform:
    """Estimate the similarity transform mapping template landmarks onto detected ones.

    Scale comes from the anchor-pair distance ratio, the angle from the signed
    rotation between the (mirrored) template anchor vector and the detected
    one, and the translation pins the first anchor (the wrist, for the default
    anchors) onto its detected counterpart. The mirror flag is set when the
    chirality of the two sets disagrees.

    Raises DegenerateKeypoints when an anchor or chirality landmark is missing,
    or when the anchors in either set coincide.
    """
    ref_id, far_id = anchors
    for name, kps in (("template", template_kps), ("detected", detected_kps)):
        missing = {ref_id, far_id} - kps.detected_ids
        if missing:
            raise DegenerateKeypoints(f"{name} set is missing anchor landmarks {sorted(missing)}")

    t_ref = template_kps.point(ref_id)
    t_far = template_kps.point(far_id)
    s_ref = detected_kps.point(ref_id)
    s_far = detected_kps.point(far_id)

    v_t = t_far - t_ref
    v_s = s_far - s_ref
    if v_t.norm() <= _MIN_ANCHOR_SEPARATION:
        raise DegenerateKeypoints("template anchors coincide")
    if v_s.norm() <= _MIN_ANCHOR_SEPARATION:
        raise DegenerateKeypoints("detected anchors coincide")

    scale = v_s.norm() / v_t.norm()
    mirror = infer_chirality(template_kps) is not infer_chirality(detected_kps)

    fv = Point2(-v_t.x, v_t.y) if mirror else v_t
    angle = math.atan2(fv.x * v_s.y - fv.y * v_s.x, fv.x * v_s.x + fv.y * v_s.y)

    bare = SimilarityTransform(scale, angle, Point2(0.0, 0.0), mirror)
    moved = bare.apply(t_ref)
    return SimilarityTransform(
        scale, angle, Point2(s_ref.x - moved.x, s_ref.y - moved.y), mirror
    )
