"""Wire formats decoupling the pipeline from neural backends, plus a stub backend.

All documents are UTF-8 JSON. A backend is any executable invoked as

    backend <request.json>

that writes a response JSON to standard output. Relative paths inside a
request are resolved against the request file's directory; the pipeline
writes absolute paths. The bundled stub backend renders the control image
into the mask and never touches pixels outside it, which makes it a
deterministic, hermetic stand-in for a diffusion model.
"""

from __future__ import annotations

import json
import subprocess
import sys
from dataclasses import dataclass
from pathlib import Path

from .geometry import Handedness, Keypoint, KeypointSet, Point2
from .raster import (
    BoundingBox,
    DimensionMismatch,
    load_depth,
    load_mask,
    load_rgb,
    paste_depth,
    save_rgb,
)

PROTOCOL_VERSION = "1"

STUB_BACKEND_NAME = "stub"

_RESTORED_SUFFIX = ".restored.png"


class ParseError(Exception):
    pass


class InvariantViolation(Exception):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class FileMissing(Exception):
    pass


class BackendFailure(Exception):
    pass


@dataclass(frozen=True)
class HandPose:
    hand_id: str
    keypoints: KeypointSet
    handedness_guess: Handedness | None = None


@dataclass(frozen=True)
class BodyLandmark:
    label: str
    point: Point2


@dataclass(frozen=True)
class PoseEstimate:
    image_id: str
    hands: tuple[HandPose, ...]
    body_landmarks: tuple[BodyLandmark, ...] = ()

    def hand(self, hand_id: str) -> HandPose:
        for h in self.hands:
            if h.hand_id == hand_id:
                return h
        raise KeyError(f"hand {hand_id!r} not in pose estimate")


@dataclass(frozen=True)
class Detection:
    hand_id: str
    bbox: BoundingBox
    classifier_confidence: float
    malformed: bool


@dataclass(frozen=True)
class DetectionResult:
    image_id: str
    detections: tuple[Detection, ...]

    def detection(self, hand_id: str) -> Detection:
        for d in self.detections:
            if d.hand_id == hand_id:
                return d
        raise KeyError(f"hand {hand_id!r} not in detections")


@dataclass(frozen=True)
class RestorationRequest:
    image_path: str
    control_image_path: str
    mask_path: str
    prompt: str
    seed: int


@dataclass(frozen=True)
class RestorationResponse:
    restored_image_path: str
    backend_name: str
    seed: int


# Parsing and validation -------------------------------------------------------


def _load_json(path: str | Path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: expected a JSON object")
    return doc


def pose_from_dict(doc: dict) -> PoseEstimate:
    if "image_id" not in doc or "hands" not in doc:
        raise ParseError("pose estimate needs image_id and hands")
    hands: list[HandPose] = []
    seen: set[str] = set()
    for i, entry in enumerate(doc["hands"]):
        field = f"hands[{i}]"
        hand_id = str(entry.get("hand_id", ""))
        if not hand_id:
            raise InvariantViolation(field + ".hand_id", "missing or empty")
        if hand_id in seen:
            raise InvariantViolation(field + ".hand_id", f"duplicate hand id {hand_id!r}")
        seen.add(hand_id)
        try:
            kps = KeypointSet(
                tuple(
                    Keypoint(
                        int(kp["id"]),
                        Point2(float(kp["x"]), float(kp["y"])),
                        float(kp.get("confidence", 1.0)),
                    )
                    for kp in entry.get("keypoints", [])
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvariantViolation(field + ".keypoints", str(exc)) from exc
        guess_raw = entry.get("handedness_guess")
        guess: Handedness | None = None
        if guess_raw is not None:
            if guess_raw not in ("left", "right"):
                raise InvariantViolation(field + ".handedness_guess", f"bad value {guess_raw!r}")
            guess = Handedness(guess_raw)
        hands.append(HandPose(hand_id, kps, guess))
    body: list[BodyLandmark] = []
    for i, entry in enumerate(doc.get("body_landmarks", []) or []):
        try:
            body.append(BodyLandmark(str(entry["label"]), Point2(float(entry["x"]), float(entry["y"]))))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvariantViolation(f"body_landmarks[{i}]", str(exc)) from exc
    return PoseEstimate(str(doc["image_id"]), tuple(hands), tuple(body))


def pose_to_dict(pose: PoseEstimate) -> dict:
    doc: dict = {
        "image_id": pose.image_id,
        "hands": [
            {
                "hand_id": h.hand_id,
                **(
                    {"handedness_guess": h.handedness_guess.value}
                    if h.handedness_guess is not None
                    else {}
                ),
                "keypoints": [
                    {"id": kp.id, "x": kp.point.x, "y": kp.point.y, "confidence": kp.confidence}
                    for kp in h.keypoints
                ],
            }
            for h in pose.hands
        ],
    }
    if pose.body_landmarks:
        doc["body_landmarks"] = [
            {"label": b.label, "x": b.point.x, "y": b.point.y} for b in pose.body_landmarks
        ]
    return doc


def detections_from_dict(doc: dict) -> DetectionResult:
    if "image_id" not in doc or "detections" not in doc:
        raise ParseError("detection result needs image_id and detections")
    detections: list[Detection] = []
    seen: set[str] = set()
    for i, entry in enumerate(doc["detections"]):
        field = f"detections[{i}]"
        hand_id = str(entry.get("hand_id", ""))
        if not hand_id:
            raise InvariantViolation(field + ".hand_id", "missing or empty")
        if hand_id in seen:
            raise InvariantViolation(field + ".hand_id", f"duplicate hand id {hand_id!r}")
        seen.add(hand_id)
        try:
            box = entry["bbox"]
            bbox = BoundingBox(int(box["x"]), int(box["y"]), int(box["width"]), int(box["height"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvariantViolation(field + ".bbox", str(exc)) from exc
        confidence = float(entry.get("classifier_confidence", -1.0))
        if not 0.0 <= confidence <= 1.0:
            raise InvariantViolation(
                field + ".classifier_confidence", f"{confidence} outside [0, 1]"
            )
        detections.append(Detection(hand_id, bbox, confidence, bool(entry.get("malformed", False))))
    return DetectionResult(str(doc["image_id"]), tuple(detections))


def detections_to_dict(result: DetectionResult) -> dict:
    return {
        "image_id": result.image_id,
        "detections": [
            {
                "hand_id": d.hand_id,
                "bbox": {
                    "x": d.bbox.x,
                    "y": d.bbox.y,
                    "width": d.bbox.width,
                    "height": d.bbox.height,
                },
                "classifier_confidence": d.classifier_confidence,
                "malformed": d.malformed,
            }
            for d in result.detections
        ],
    }


def validate_pose_file(path: str | Path) -> PoseEstimate:
    return pose_from_dict(_load_json(path))


def validate_detection_file(path: str | Path) -> DetectionResult:
    return detections_from_dict(_load_json(path))


def request_to_dict(req: RestorationRequest) -> dict:
    return {
        "image_path": req.image_path,
        "control_image_path": req.control_image_path,
        "mask_path": req.mask_path,
        "prompt": req.prompt,
        "seed": req.seed,
    }


def request_from_dict(doc: dict) -> RestorationRequest:
    try:
        seed = int(doc["seed"])
        if not 0 <= seed < 2**64:
            raise InvariantViolation("seed", f"{seed} outside unsigned 64-bit range")
        return RestorationRequest(
            str(doc["image_path"]),
            str(doc["control_image_path"]),
            str(doc["mask_path"]),
            str(doc["prompt"]),
            seed,
        )
    except KeyError as exc:
        raise ParseError(f"restoration request missing field {exc}") from exc


def response_to_dict(resp: RestorationResponse) -> dict:
    return {
        "restored_image_path": resp.restored_image_path,
        "backend_name": resp.backend_name,
        "seed": resp.seed,
    }


def response_from_dict(doc: dict) -> RestorationResponse:
    try:
        return RestorationResponse(
            str(doc["restored_image_path"]), str(doc["backend_name"]), int(doc["seed"])
        )
    except KeyError as exc:
        raise ParseError(f"restoration response missing field {exc}") from exc


def write_request(req: RestorationRequest, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(request_to_dict(req), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def read_request(path: str | Path) -> RestorationRequest:
    return request_from_dict(_load_json(path))


# Stub backend ------------------------------------------------------------------


def _resolve(path_str: str, base: Path | None) -> Path:
    path = Path(path_str)
    if not path.is_absolute() and base is not None:
        path = base / path
    return path


def stub_restore(
    req: RestorationRequest,
    output_path: str | Path | None = None,
    base_dir: str | Path | None = None,
) -> RestorationResponse:
    """Deterministic restoration: render the control depth inside the mask.

    Pixels outside the mask are copied bit for bit from the input, so the
    stub preserves everything it is not allowed to repaint. Identical
    requests produce byte-identical outputs.
    """
    base = Path(base_dir) if base_dir is not None else None
    image_path = _resolve(req.image_path, base)
    control_path = _resolve(req.control_image_path, base)
    mask_path = _resolve(req.mask_path, base)
    for p in (image_path, control_path, mask_path):
        if not p.is_file():
            raise FileMissing(str(p))
    image = load_rgb(image_path)
    control = load_depth(control_path)
    mask = load_mask(mask_path)
    if (control.height, control.width) != (image.height, image.width):
        raise DimensionMismatch("control image size differs from input image")
    restored = paste_depth(image, control, mask)
    if output_path is None:
        output_path = image_path.with_name(image_path.stem + _RESTORED_SUFFIX)
    save_rgb(restored, output_path)
    return RestorationResponse(str(output_path), STUB_BACKEND_NAME, req.seed)


class StubBackend:
    """In-process equivalent of the handmend-stub-backend executable."""

    name = STUB_BACKEND_NAME

    def restore(self, req: RestorationRequest, request_path: str | Path) -> RestorationResponse:
        request_path = Path(request_path)
        output = request_path.with_name(request_path.stem + _RESTORED_SUFFIX)
        return stub_restore(req, output_path=output, base_dir=request_path.parent)


class SubprocessBackend:
    """Runs an external backend per the single-argument subprocess contract."""

    def __init__(self, executable: str | Path):
        self.executable = str(executable)
        self.name = Path(executable).name

    def restore(self, req: RestorationRequest, request_path: str | Path) -> RestorationResponse:
        proc = subprocess.run(
            [self.executable, str(request_path)],
            capture_output=True,
            text=True,
        )
        if proc.returncode != 0:
            raise BackendFailure(
                f"{self.executable} exited {proc.returncode}: {proc.stderr.strip()}"
            )
        try:
            doc = json.loads(proc.stdout)
        except json.JSONDecodeError as exc:
            raise BackendFailure(f"{self.executable} wrote invalid response JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise BackendFailure(f"{self.executable} response is not a JSON object")
        response = response_from_dict(doc)
        restored = _resolve(response.restored_image_path, Path(request_path).parent)
        if not restored.is_file():
            raise BackendFailure(f"response names a missing file: {restored}")
        return RestorationResponse(str(restored), response.backend_name, response.seed)


def stub_backend_main(argv: list[str] | None = None) -> int:
    """Entry point of the handmend-stub-backend executable."""
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 1:
        print("usage: handmend-stub-backend <request.json>", file=sys.stderr)
        return 2
    request_path = Path(argv[0])
    try:
        req = read_request(request_path)
        output = request_path.with_name(request_path.stem + _RESTORED_SUFFIX)
        response = stub_restore(req, output_path=output, base_dir=request_path.parent)
    except (ParseError, InvariantViolation, FileMissing, DimensionMismatch) as exc:
        print(f"stub backend: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(response_to_dict(response), sort_keys=True))
    return 0
