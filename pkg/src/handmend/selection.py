"""Template selection: silhouette-consistent scoring or a seeded random draw."""

from __future__ import annotations

from dataclasses import dataclass

from .geometry import DegenerateKeypoints, KeypointSet, SimilarityTransform, estimate_alignment
from .raster import BinaryMask, EmptyMask, iou, silhouette, warp_depth
from .rng import splitmix64
from .templates import TemplateLibrary


class NoViableTemplate(Exception):
    """Every template in the library failed alignment against the detected hand."""


@dataclass(frozen=True)
class SelectionResult:
    """A chosen template; transform and IoU score are present in silhouette mode only."""

    template_id: str
    transform: SimilarityTransform | None = None
    score: float | None = None


def silhouette_consistent_select(
    lib: TemplateLibrary, detected_kps: KeypointSet, target_silhouette: BinaryMask
) -> SelectionResult:
    """Pick the template whose aligned silhouette best overlaps the target.

    Each template is aligned to the detected keypoints (the estimated
    transform mirrors it when chirality disagrees), warped to the target's
    dimensions, and scored by IoU against the target. The argmax wins; ties
    break toward the lexicographically smallest template id.
    """
    if target_silhouette.count() == 0:
        raise EmptyMask("target silhouette has no set pixels")
    best: SelectionResult | None = None
    for template in sorted(lib, key=lambda t: t.id):
        try:
            transform = estimate_alignment(template.keypoints, detected_kps)
        except DegenerateKeypoints:
            continue
        warped = warp_depth(
            template.depth, transform, target_silhouette.width, target_silhouette.height
        )
        score = iou(silhouette(warped), target_silhouette)
        if best is None or score > best.score:
            best = SelectionResult(template.id, transform, score)
    if best is None:
        raise NoViableTemplate("no template could be aligned to the detected keypoints")
    return best


def random_select(lib: TemplateLibrary, seed: int) -> SelectionResult:
    """Uniform seeded draw over template ids (sorted order, splitmix64 index)."""
    ids = sorted(lib.ids)
    index = splitmix64(seed) % len(ids)
    return SelectionResult(ids[index])
