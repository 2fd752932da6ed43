"""Hand depth-template library: loading, validation, and mirroring.

A library manifest is a UTF-8 JSON document:

    {"templates": [{"id": ..., "depth_path": ..., "handedness": "left"|"right",
                    "prompt": ..., "gesture": ...,
                    "keypoints": [{"id": 0, "x": ..., "y": ...}, ...]}]}

Depth paths are resolved relative to the manifest file. Templates of one
chirality are stored; the other is derived on demand with mirror_template.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator

import numpy as np

from .geometry import (
    MIDDLE_BASE,
    WRIST,
    DegenerateKeypoints,
    Handedness,
    Keypoint,
    KeypointSet,
    Point2,
    infer_chirality,
)
from .raster import DepthImage, load_depth, save_depth, silhouette


class ManifestParseError(Exception):
    pass


class TemplateInvalid(Exception):
    def __init__(self, template_id: str, reason: str):
        super().__init__(f"template {template_id!r}: {reason}")
        self.template_id = template_id
        self.reason = reason


class DuplicateId(Exception):
    def __init__(self, template_id: str):
        super().__init__(f"duplicate template id {template_id!r}")
        self.template_id = template_id


_MIRROR_SUFFIX = "+mirror"


@dataclass(frozen=True)
class HandTemplate:
    """An anatomically correct hand pose: depth map, annotated landmarks, prompt."""

    id: str
    depth: DepthImage
    keypoints: KeypointSet
    handedness: Handedness
    prompt: str
    gesture_label: str


def validate_template(t: HandTemplate) -> None:
    """Check the structural invariants; raises TemplateInvalid."""
    if silhouette(t.depth).count() == 0:
        raise TemplateInvalid(t.id, "depth silhouette is empty")
    missing = {WRIST, MIDDLE_BASE} - t.keypoints.detected_ids
    if missing:
        raise TemplateInvalid(t.id, f"missing required landmarks {sorted(missing)}")
    for kp in t.keypoints:
        if not (0 <= kp.point.x < t.depth.width and 0 <= kp.point.y < t.depth.height):
            raise TemplateInvalid(
                t.id, f"landmark {kp.id} at ({kp.point.x}, {kp.point.y}) outside depth bounds"
            )
    try:
        observed = infer_chirality(t.keypoints)
    except DegenerateKeypoints as exc:
        raise TemplateInvalid(t.id, f"chirality undeterminable: {exc}") from exc
    if observed is not t.handedness:
        raise TemplateInvalid(
            t.id, f"declared handedness {t.handedness.value} but keypoints read as {observed.value}"
        )


@dataclass(frozen=True)
class TemplateLibrary:
    templates: tuple[HandTemplate, ...]
    manifest_path: Path | None = None

    def __post_init__(self) -> None:
        if not self.templates:
            raise ValueError("template library is empty")
        seen: set[str] = set()
        for t in self.templates:
            if t.id in seen:
                raise DuplicateId(t.id)
            seen.add(t.id)

    def __len__(self) -> int:
        return len(self.templates)

    def __iter__(self) -> Iterator[HandTemplate]:
        return iter(self.templates)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(t.id for t in self.templates)

    def get(self, template_id: str) -> HandTemplate:
        for t in self.templates:
            if t.id == template_id:
                return t
        raise KeyError(f"no template with id {template_id!r}")


def mirror_template(t: HandTemplate) -> HandTemplate:
    """Horizontal flip of depth and keypoints, with handedness flipped.

    An involution: mirroring twice restores depth, keypoints, handedness,
    and id (the id toggles a '+mirror' suffix).
    """
    width = t.depth.width
    mirrored_kps = KeypointSet(
        tuple(
            Keypoint(kp.id, Point2(width - 1 - kp.point.x, kp.point.y), kp.confidence)
            for kp in t.keypoints
        )
    )
    if t.id.endswith(_MIRROR_SUFFIX):
        new_id = t.id[: -len(_MIRROR_SUFFIX)]
    else:
        new_id = t.id + _MIRROR_SUFFIX
    return replace(
        t,
        id=new_id,
        depth=DepthImage(np.fliplr(t.depth.depth)),
        keypoints=mirrored_kps,
        handedness=t.handedness.flipped(),
    )


def _parse_handedness(value: object, template_id: str) -> Handedness:
    if value == "left":
        return Handedness.LEFT
    if value == "right":
        return Handedness.RIGHT
    raise TemplateInvalid(template_id, f"handedness must be 'left' or 'right', got {value!r}")


def load_library(manifest: str | Path) -> TemplateLibrary:
    """Load and validate every template listed in a manifest file."""
    manifest_path = Path(manifest)
    try:
        doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestParseError(f"{manifest_path}: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("templates"), list):
        raise ManifestParseError(f"{manifest_path}: expected an object with a 'templates' list")
    if not doc["templates"]:
        raise ManifestParseError(f"{manifest_path}: template list is empty")

    templates: list[HandTemplate] = []
    seen: set[str] = set()
    for entry in doc["templates"]:
        if not isinstance(entry, dict) or "id" not in entry:
            raise ManifestParseError(f"{manifest_path}: template entry without an id")
        tid = str(entry["id"])
        if tid in seen:
            raise DuplicateId(tid)
        seen.add(tid)
        try:
            depth = load_depth(manifest_path.parent / entry["depth_path"])
        except (KeyError, OSError, ValueError) as exc:
            raise TemplateInvalid(tid, f"cannot load depth image: {exc}") from exc
        try:
            kps = KeypointSet(
                tuple(
                    Keypoint(int(kp["id"]), Point2(float(kp["x"]), float(kp["y"])))
                    for kp in entry["keypoints"]
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise TemplateInvalid(tid, f"bad keypoints: {exc}") from exc
        template = HandTemplate(
            id=tid,
            depth=depth,
            keypoints=kps,
            handedness=_parse_handedness(entry.get("handedness"), tid),
            prompt=str(entry.get("prompt", "")),
            gesture_label=str(entry.get("gesture", "")),
        )
        validate_template(template)
        templates.append(template)
    return TemplateLibrary(tuple(templates), manifest_path=manifest_path)


def write_library(library: TemplateLibrary, directory: str | Path) -> Path:
    """Materialize a library to disk (depth PNGs plus manifest.json)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for t in library:
        depth_name = f"{t.id.replace('+', '_')}.png"
        save_depth(t.depth, directory / depth_name)
        entries.append(
            {
                "id": t.id,
                "depth_path": depth_name,
                "handedness": t.handedness.value,
                "prompt": t.prompt,
                "gesture": t.gesture_label,
                "keypoints": [
                    {"id": kp.id, "x": kp.point.x, "y": kp.point.y} for kp in t.keypoints
                ],
            }
        )
    manifest_path = directory / "manifest.json"
    manifest_path.write_text(
        json.dumps({"templates": entries}, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest_path
