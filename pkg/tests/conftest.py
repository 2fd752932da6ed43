"""Shared fixtures: synthetic restoration jobs built from the bundled templates."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from handmend.geometry import WRIST, Point2, SimilarityTransform
from handmend.pipeline import PipelineConfig, RestorationJob
from handmend.procedural import builtin_library
from handmend.protocol import detections_to_dict, pose_from_dict, pose_to_dict
from handmend.raster import (
    BinaryMask,
    RgbImage,
    mask_bbox,
    save_mask,
    save_rgb,
    silhouette,
    warp_depth,
)
from handmend.templates import HandTemplate


@pytest.fixture(scope="session")
def library():
    return builtin_library()


def textured_image(rng: np.random.Generator, width: int, height: int) -> RgbImage:
    """Random field with both coarse structure and fine texture, like a photo."""
    coarse = gaussian_filter(rng.normal(0.0, 1.0, size=(height, width, 3)), sigma=(6, 6, 0))
    coarse = coarse / (np.abs(coarse).max() + 1e-9)
    fine = rng.normal(0.0, 1.0, size=(height, width, 3))
    ramp = np.linspace(0, 50, width)[np.newaxis, :, np.newaxis]
    pixels = np.clip(120 + 70 * coarse + 22 * fine + ramp, 0, 255).astype(np.uint8)
    return RgbImage(pixels)


@dataclass
class SyntheticHand:
    hand_id: str
    template: HandTemplate
    transform: SimilarityTransform
    target: BinaryMask


@dataclass
class SyntheticJobFiles:
    job: RestorationJob
    directory: Path
    hands: list[SyntheticHand]


def ground_truth_transform(
    rng: np.random.Generator,
    template: HandTemplate,
    wrist_at: tuple[float, float],
    scale_range: tuple[float, float] = (0.45, 0.65),
) -> SimilarityTransform:
    """Random scale/angle/mirror, with translation pinning the wrist at a fixed point."""
    scale = float(rng.uniform(*scale_range))
    angle = float(rng.uniform(-math.pi, math.pi))
    mirror = bool(rng.integers(2))
    bare = SimilarityTransform(scale, angle, Point2(0.0, 0.0), mirror)
    wrist = template.keypoints.point(WRIST)
    moved = bare.apply(wrist)
    return SimilarityTransform(
        scale, angle, Point2(wrist_at[0] - moved.x, wrist_at[1] - moved.y), mirror
    )


def build_job_dir(
    directory: Path,
    seed: int,
    config: PipelineConfig,
    n_hands: int = 1,
    image_size: int = 224,
    image_id: str | None = None,
) -> SyntheticJobFiles:
    """Write a complete synthetic job (image, pose, detections, silhouette) to disk."""
    library = builtin_library()
    rng = np.random.default_rng(seed)
    directory.mkdir(parents=True, exist_ok=True)
    image_id = image_id or f"img{seed:05d}"

    image = textured_image(rng, image_size, image_size)
    hands: list[SyntheticHand] = []
    pose_hands = []
    detections = []
    combined_target = np.zeros((image_size, image_size), dtype=bool)
    for i in range(n_hands):
        template = library.templates[int(rng.integers(len(library)))]
        if n_hands == 1:
            wrist_at = (image_size / 2, image_size / 2)
        else:
            wrist_at = (image_size * (0.3 + 0.4 * i / max(1, n_hands - 1)), image_size / 2)
            # Tighter scale keeps multiple hands inside the frame.
        scale_range = (0.45, 0.65) if n_hands == 1 else (0.3, 0.4)
        transform = ground_truth_transform(rng, template, wrist_at, scale_range)
        warped = warp_depth(template.depth, transform, image_size, image_size)
        target = silhouette(warped)
        assert target.count() > 0
        combined_target |= target.bits

        hand_id = f"h{i}"
        detected = template.keypoints.map(transform)
        pose_hands.append(
            {
                "hand_id": hand_id,
                "keypoints": [
                    {"id": kp.id, "x": kp.point.x, "y": kp.point.y, "confidence": 0.9}
                    for kp in detected
                ],
            }
        )
        box = mask_bbox(target)
        pad = 6
        detections.append(
            {
                "hand_id": hand_id,
                "bbox": {
                    "x": max(box.x - pad, 0),
                    "y": max(box.y - pad, 0),
                    "width": min(box.width + 2 * pad, image_size - max(box.x - pad, 0)),
                    "height": min(box.height + 2 * pad, image_size - max(box.y - pad, 0)),
                },
                "classifier_confidence": 0.9,
                "malformed": True,
            }
        )
        hands.append(SyntheticHand(hand_id, template, transform, target))

    image_path = directory / "image.png"
    save_rgb(image, image_path)
    pose_doc = {"image_id": image_id, "hands": pose_hands}
    (directory / "pose.json").write_text(json.dumps(pose_doc, indent=2) + "\n", encoding="utf-8")
    det_doc = {"image_id": image_id, "detections": detections}
    (directory / "detections.json").write_text(
        json.dumps(det_doc, indent=2) + "\n", encoding="utf-8"
    )
    target_mask = BinaryMask(combined_target)
    save_mask(target_mask, directory / "silhouette.png")

    pose = pose_from_dict(pose_doc)
    from handmend.protocol import detections_from_dict

    job = RestorationJob(
        image=image,
        image_path=image_path,
        pose=pose,
        detections=detections_from_dict(det_doc),
        config=config,
        target_silhouette=target_mask,
    )
    # Serialization sanity: the docs written above are round-trippable.
    assert pose_to_dict(pose)["image_id"] == image_id
    assert detections_to_dict(job.detections)["image_id"] == image_id
    return SyntheticJobFiles(job=job, directory=directory, hands=hands)


@pytest.fixture
def job_factory(tmp_path):
    counter = [0]

    def make(seed: int, config: PipelineConfig | None = None, n_hands: int = 1,
             image_size: int = 224, image_id: str | None = None) -> SyntheticJobFiles:
        counter[0] += 1
        directory = tmp_path / f"job{counter[0]:03d}"
        return build_job_dir(
            directory,
            seed,
            config or PipelineConfig(),
            n_hands=n_hands,
            image_size=image_size,
            image_id=image_id,
        )

    return make
