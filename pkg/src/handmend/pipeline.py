"""Three-stage orchestration: ingest detections, build conditioning signals,
drive a restoration backend with multi-scale retry, and aggregate metrics.

Hands within one image are restored sequentially in ascending hand-id order,
each seeing the previous hand's output; separate images are independent and
may run in parallel. All randomness flows from the job seed through the
documented splitmix64 generator, so identical inputs give byte-identical
outputs.
"""

from __future__ import annotations

import dataclasses
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .geometry import Point2, SimilarityTransform, estimate_alignment
from .metrics import (
    ClassifierRecord,
    EmptyDataset,
    HandPoseRecord,
    MetricsReport,
    masked_psnr,
    masked_ssim,
    mean_classifier_confidence,
    mean_pose_confidence,
)
from .protocol import (
    BackendFailure,
    DetectionResult,
    PoseEstimate,
    RestorationRequest,
    RestorationResponse,
    write_request,
)
from .raster import (
    BinaryMask,
    DepthImage,
    EmptyMask,
    RgbImage,
    bbox_to_mask,
    load_rgb,
    mask_bbox,
    save_depth,
    save_mask,
    scale_mask,
    silhouette,
    union,
    warp_depth,
)
from .rng import float_bits, splitmix64, unit_float
from .selection import random_select, silhouette_consistent_select
from .templates import HandTemplate, TemplateLibrary

DEFAULT_SCALE_FACTORS = (1.0, 1.1, 1.2)
DEFAULT_MALFORMED_THRESHOLD = 0.5


class NoMaskEnabled(Exception):
    """Both mask sources are ablated; there is no restoration region."""


class AllScalesFailed(Exception):
    """Every scale factor's backend invocation failed."""


@dataclass(frozen=True)
class AblationConfig:
    """Switches for the mask sources and alignment components; all on by default."""

    use_bbox_mask: bool = True
    use_template_mask: bool = True
    use_scale: bool = True
    use_translation: bool = True
    use_rotation: bool = True
    use_handedness: bool = True


# The ablation grid rows, one component off at a time, then everything on.
TABLE_ROWS: tuple[AblationConfig, ...] = (
    AblationConfig(use_bbox_mask=False),
    AblationConfig(use_template_mask=False),
    AblationConfig(use_scale=False),
    AblationConfig(use_translation=False),
    AblationConfig(use_rotation=False),
    AblationConfig(use_handedness=False),
    AblationConfig(),
)


@dataclass(frozen=True)
class PipelineConfig:
    selection_mode: str = "random"  # "silhouette" or "random"
    seed: int = 0
    scale_factors: tuple[float, ...] = DEFAULT_SCALE_FACTORS
    malformed_threshold: float = DEFAULT_MALFORMED_THRESHOLD
    force_all: bool = False
    ablation: AblationConfig = field(default_factory=AblationConfig)

    def __post_init__(self) -> None:
        if self.selection_mode not in ("silhouette", "random"):
            raise ValueError(f"selection_mode must be 'silhouette' or 'random', got {self.selection_mode!r}")
        if not self.scale_factors:
            raise ValueError("scale_factors must be nonempty")
        for f in self.scale_factors:
            if not 0.5 <= f <= 2.0:
                raise ValueError(f"scale factor {f} outside [0.5, 2.0]")
        if not 0.0 <= self.malformed_threshold <= 1.0:
            raise ValueError("malformed_threshold outside [0, 1]")


@dataclass(frozen=True)
class RestorationJob:
    image: RgbImage
    image_path: Path
    pose: PoseEstimate
    detections: DetectionResult
    config: PipelineConfig
    target_silhouette: BinaryMask | None = None

    def __post_init__(self) -> None:
        if self.pose.image_id != self.detections.image_id:
            raise ValueError(
                f"pose is for {self.pose.image_id!r} but detections are for {self.detections.image_id!r}"
            )
        if self.target_silhouette is not None and (
            self.target_silhouette.height,
            self.target_silhouette.width,
        ) != (self.image.height, self.image.width):
            raise ValueError("target silhouette dimensions differ from the image")

    @property
    def image_id(self) -> str:
        return self.pose.image_id


@dataclass(frozen=True)
class ControlBundle:
    """Conditioning pair handed to the backend: depth control image + mask + prompt."""

    control_image: DepthImage
    control_mask: BinaryMask
    prompt: str
    transform: SimilarityTransform
    template_id: str


@dataclass(frozen=True)
class ScaleScore:
    scale: float
    classifier_confidence: float
    pose_confidence: float
    keypoint_confidences: Mapping[int, float] | None = None


Scorer = Callable[[RestorationRequest, RestorationResponse, float], ScaleScore]


@dataclass(frozen=True)
class RestorationOutcome:
    hand_id: str
    restored: RgbImage
    restored_path: Path
    chosen_scale: float
    per_scale_scores: tuple[ScaleScore, ...]
    bundle: ControlBundle
    failed_scales: tuple[tuple[float, str], ...] = ()


def fixture_scorer(
    request: RestorationRequest, response: RestorationResponse, scale: float
) -> ScaleScore:
    """Deterministic per-scale scores derived from the request seed.

    Stands in for a real detector/pose pass over the candidate image, keeping
    stub-backed runs hermetic and reproducible.
    """
    h = splitmix64(request.seed ^ float_bits(scale))
    return ScaleScore(
        scale=scale,
        classifier_confidence=unit_float(h),
        pose_confidence=unit_float(splitmix64(h)),
    )


def eligible_hands(job: RestorationJob) -> list[str]:
    """Hand ids to restore, ascending: flagged malformed at or above the
    confidence threshold, or every detected hand under force_all."""
    cfg = job.config
    ids = [
        d.hand_id
        for d in job.detections.detections
        if cfg.force_all or (d.malformed and d.classifier_confidence >= cfg.malformed_threshold)
    ]
    return sorted(ids)


def _ablated(transform: SimilarityTransform, ablation: AblationConfig) -> SimilarityTransform:
    """Force ablated alignment components back to identity."""
    return SimilarityTransform(
        scale=transform.scale if ablation.use_scale else 1.0,
        angle=transform.angle if ablation.use_rotation else 0.0,
        translation=transform.translation if ablation.use_translation else Point2(0.0, 0.0),
        mirror=transform.mirror if ablation.use_handedness else False,
    )


def build_control_bundle(
    job: RestorationJob, hand_id: str, template: HandTemplate
) -> ControlBundle:
    """Align a template to one detected hand and assemble its conditioning signals.

    The control mask is the union of the enabled sources: the detector
    bounding-box mask and the filled bounding box of the warped template
    silhouette.
    """
    try:
        hand = job.pose.hand(hand_id)
    except KeyError as exc:
        raise ValueError(str(exc)) from exc
    detection = job.detections.detection(hand_id)
    ablation = job.config.ablation
    if not (ablation.use_bbox_mask or ablation.use_template_mask):
        raise NoMaskEnabled("both mask sources are disabled")

    transform = _ablated(estimate_alignment(template.keypoints, hand.keypoints), ablation)
    control = warp_depth(template.depth, transform, job.image.width, job.image.height)

    masks: list[BinaryMask] = []
    if ablation.use_bbox_mask:
        masks.append(bbox_to_mask(detection.bbox, job.image.width, job.image.height))
    if ablation.use_template_mask:
        sil = silhouette(control)
        if sil.count() > 0:
            masks.append(bbox_to_mask(mask_bbox(sil), job.image.width, job.image.height))
        else:
            # Ablated alignment can push the template fully off-canvas.
            masks.append(BinaryMask.zeros(job.image.width, job.image.height))

    control_mask = masks[0]
    for m in masks[1:]:
        control_mask = union(control_mask, m)
    return ControlBundle(control, control_mask, template.prompt, transform, template.id)


def pick_template(job: RestorationJob, hand_id: str, library: TemplateLibrary) -> HandTemplate:
    if job.config.selection_mode == "silhouette":
        if job.target_silhouette is None:
            raise ValueError("silhouette selection requires a target silhouette")
        hand = job.pose.hand(hand_id)
        result = silhouette_consistent_select(library, hand.keypoints, job.target_silhouette)
        return library.get(result.template_id)
    result = random_select(library, job.config.seed)
    return library.get(result.template_id)


def restore_hand(
    job: RestorationJob,
    hand_id: str,
    library: TemplateLibrary,
    backend,
    out_dir: str | Path,
    scorer: Scorer | None = None,
    source_image_path: str | Path | None = None,
    request_seed: int | None = None,
) -> RestorationOutcome:
    """Restore one hand with multi-scale retry.

    One request per scale factor scales the restoration mask about its
    center; candidates are ranked by (classifier confidence, pose confidence,
    smallest scale). Failed scales are skipped; AllScalesFailed is raised if
    none succeed.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scorer = scorer or fixture_scorer
    source_path = Path(source_image_path) if source_image_path is not None else job.image_path
    seed = job.config.seed if request_seed is None else request_seed

    template = pick_template(job, hand_id, library)
    bundle = build_control_bundle(job, hand_id, template)

    control_path = out_dir / f"{hand_id}_control.png"
    save_depth(bundle.control_image, control_path)
    save_mask(bundle.control_mask, out_dir / f"{hand_id}_mask.png")

    scores: list[ScaleScore] = []
    responses: dict[float, RestorationResponse] = {}
    failures: list[tuple[float, str]] = []
    for scale in job.config.scale_factors:
        tag = f"{hand_id}_s{scale:.4g}"
        try:
            scaled = scale_mask(bundle.control_mask, scale)
            mask_path = out_dir / f"{tag}_mask.png"
            save_mask(scaled, mask_path)
            request = RestorationRequest(
                image_path=str(source_path.resolve()),
                control_image_path=str(control_path.resolve()),
                mask_path=str(mask_path.resolve()),
                prompt=bundle.prompt,
                seed=seed,
            )
            request_path = out_dir / f"{tag}_request.json"
            write_request(request, request_path)
            response = backend.restore(request, request_path)
            scores.append(scorer(request, response, scale))
            responses[scale] = response
        except (BackendFailure, EmptyMask, OSError) as exc:
            failures.append((scale, str(exc)))
    if not scores:
        raise AllScalesFailed(
            f"hand {hand_id!r}: all {len(job.config.scale_factors)} scales failed: "
            + "; ".join(f"{s:g}: {msg}" for s, msg in failures)
        )

    best = min(scores, key=lambda s: (-s.classifier_confidence, -s.pose_confidence, s.scale))
    chosen = responses[best.scale]
    restored_path = Path(chosen.restored_image_path)
    return RestorationOutcome(
        hand_id=hand_id,
        restored=load_rgb(restored_path),
        restored_path=restored_path,
        chosen_scale=best.scale,
        per_scale_scores=tuple(scores),
        bundle=bundle,
        failed_scales=tuple(failures),
    )


# Batch runs ---------------------------------------------------------------------


@dataclass(frozen=True)
class ImageResult:
    image_id: str
    outcomes: tuple[RestorationOutcome, ...]
    final_path: Path | None
    masked_psnr_db: float | None
    masked_ssim: float | None


@dataclass(frozen=True)
class BatchResult:
    report: MetricsReport
    images: tuple[ImageResult, ...]
    failures: tuple[tuple[str, str | None, str], ...]  # (image_id, hand_id, error)


def transform_to_dict(t: SimilarityTransform) -> dict:
    return {
        "scale": t.scale,
        "angle": t.angle,
        "translation": {"x": t.translation.x, "y": t.translation.y},
        "mirror": t.mirror,
    }


def bundle_to_dict(bundle: ControlBundle, control_name: str, mask_name: str) -> dict:
    return {
        "template_id": bundle.template_id,
        "prompt": bundle.prompt,
        "transform": transform_to_dict(bundle.transform),
        "control_image": control_name,
        "control_mask": mask_name,
    }


def outcome_to_dict(outcome: RestorationOutcome, image_id: str) -> dict:
    """JSON form of an outcome; file references are names relative to the out dir."""
    return {
        "image_id": image_id,
        "hand_id": outcome.hand_id,
        "chosen_scale": outcome.chosen_scale,
        "per_scale_scores": [
            {
                "scale": s.scale,
                "classifier_confidence": s.classifier_confidence,
                "pose_confidence": s.pose_confidence,
            }
            for s in outcome.per_scale_scores
        ],
        "failed_scales": [{"scale": s, "error": msg} for s, msg in outcome.failed_scales],
        "restored_image": outcome.restored_path.name,
        "bundle": bundle_to_dict(
            outcome.bundle,
            f"{outcome.hand_id}_control.png",
            f"{outcome.hand_id}_mask.png",
        ),
    }


def _pose_record(image_id: str, hand_id: str, score: ScaleScore) -> HandPoseRecord:
    key = f"{image_id}/{hand_id}"
    if score.keypoint_confidences is not None:
        return HandPoseRecord(key, dict(score.keypoint_confidences))
    # Scalar fixture score: a single-entry record keeps Eq-style aggregation uniform.
    return HandPoseRecord(key, {0: score.pose_confidence})


def _run_job(
    job: RestorationJob,
    library: TemplateLibrary,
    backend,
    out_dir: Path,
    scorer: Scorer | None,
) -> tuple[ImageResult, list[HandPoseRecord], list[ClassifierRecord], list[tuple[str, str | None, str]]]:
    out_dir.mkdir(parents=True, exist_ok=True)
    failures: list[tuple[str, str | None, str]] = []
    outcomes: list[RestorationOutcome] = []
    pose_records: list[HandPoseRecord] = []
    classifier_records: list[ClassifierRecord] = []
    applied_masks: list[BinaryMask] = []

    current_path = job.image_path
    for index, hand_id in enumerate(eligible_hands(job)):
        try:
            outcome = restore_hand(
                job,
                hand_id,
                library,
                backend,
                out_dir,
                scorer=scorer,
                source_image_path=current_path,
                request_seed=splitmix64(job.config.seed + index),
            )
        except Exception as exc:  # collected; the batch continues
            failures.append((job.image_id, hand_id, str(exc)))
            continue
        outcomes.append(outcome)
        current_path = outcome.restored_path
        applied_masks.append(scale_mask(outcome.bundle.control_mask, outcome.chosen_scale))
        best = min(
            outcome.per_scale_scores,
            key=lambda s: (-s.classifier_confidence, -s.pose_confidence, s.scale),
        )
        pose_records.append(_pose_record(job.image_id, hand_id, best))
        classifier_records.append(
            ClassifierRecord(f"{job.image_id}/{hand_id}", best.classifier_confidence)
        )
        (out_dir / f"{hand_id}_outcome.json").write_text(
            json.dumps(outcome_to_dict(outcome, job.image_id), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )

    psnr = ssim = None
    final_path: Path | None = None
    if outcomes:
        final_mask = applied_masks[0]
        for m in applied_masks[1:]:
            final_mask = union(final_mask, m)
        final_image = load_rgb(current_path)
        final_path = current_path
        psnr = masked_psnr(job.image, final_image, final_mask)
        ssim = masked_ssim(job.image, final_image, final_mask)
    return (
        ImageResult(job.image_id, tuple(outcomes), final_path, psnr, ssim),
        pose_records,
        classifier_records,
        failures,
    )


def run_batch(
    jobs: Sequence[RestorationJob],
    library: TemplateLibrary,
    backend,
    out_root: str | Path,
    scorer: Scorer | None = None,
    workers: int = 1,
) -> BatchResult:
    """Restore every eligible hand in every job, then aggregate the metric suite.

    Per-job errors are collected and the batch continues; EmptyDataset is
    raised if no hand in the whole batch was restored.
    """
    if not jobs:
        raise EmptyDataset("no jobs")
    ids = [job.image_id for job in jobs]
    if len(set(ids)) != len(ids):
        raise ValueError("jobs must have unique image ids")
    out_root = Path(out_root)

    def run(job: RestorationJob):
        return _run_job(job, library, backend, out_root / job.image_id, scorer)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(job) for job in jobs]

    images: list[ImageResult] = []
    pose_records: list[HandPoseRecord] = []
    classifier_records: list[ClassifierRecord] = []
    failures: list[tuple[str, str | None, str]] = []
    for image_result, p_records, c_records, job_failures in results:
        images.append(image_result)
        pose_records.extend(p_records)
        classifier_records.extend(c_records)
        failures.extend(job_failures)

    if not classifier_records:
        raise EmptyDataset("no hands were restored")

    psnr_values = [r.masked_psnr_db for r in images if r.masked_psnr_db is not None]
    ssim_values = [r.masked_ssim for r in images if r.masked_ssim is not None]
    report = MetricsReport(
        mean_pose_confidence=mean_pose_confidence(pose_records),
        mean_classifier_confidence=mean_classifier_confidence(classifier_records),
        masked_psnr_db=sum(psnr_values) / len(psnr_values),
        masked_ssim=sum(ssim_values) / len(ssim_values),
        n_hands=len(classifier_records),
    )

    report_doc = {
        **report.to_dict(),
        "images": [
            {
                "image_id": r.image_id,
                "restored_hands": [o.hand_id for o in r.outcomes],
                "masked_psnr_db": (
                    None
                    if r.masked_psnr_db is None
                    else ("+inf" if math.isinf(r.masked_psnr_db) else r.masked_psnr_db)
                ),
                "masked_ssim": r.masked_ssim,
            }
            for r in images
        ],
        "failures": [
            {"image_id": img, "hand_id": hand, "error": msg} for img, hand, msg in failures
        ],
    }
    (out_root / "report.json").write_text(
        json.dumps(report_doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return BatchResult(report, tuple(images), tuple(failures))


def run_ablation(
    jobs: Sequence[RestorationJob],
    library: TemplateLibrary,
    backend,
    configs: Sequence[AblationConfig],
    out_root: str | Path,
    scorer: Scorer | None = None,
    workers: int = 1,
) -> list[tuple[AblationConfig, MetricsReport]]:
    """One batch run per ablation row, in row order."""
    if not configs:
        raise ValueError("no ablation configs")
    out_root = Path(out_root)
    rows: list[tuple[AblationConfig, MetricsReport]] = []
    for i, ablation in enumerate(configs):
        row_jobs = [
            dataclasses.replace(job, config=dataclasses.replace(job.config, ablation=ablation))
            for job in jobs
        ]
        result = run_batch(
            row_jobs, library, backend, out_root / f"row{i}", scorer=scorer, workers=workers
        )
        rows.append((ablation, result.report))
    return rows


def format_ablation_grid(rows: Sequence[tuple[AblationConfig, MetricsReport]]) -> str:
    """Tab-separated grid: one row per config, flag columns then both confidences."""
    lines = ["Md\tMt\tS\tT\tR\tH\tc_pose\tc_classifier"]
    for ablation, report in rows:
        flags = (
            ablation.use_bbox_mask,
            ablation.use_template_mask,
            ablation.use_scale,
            ablation.use_translation,
            ablation.use_rotation,
            ablation.use_handedness,
        )
        lines.append(
            "\t".join(
                [*("1" if f else "0" for f in flags)]
                + [
                    f"{report.mean_pose_confidence:.4f}",
                    f"{report.mean_classifier_confidence:.4f}",
                ]
            )
        )
    return "\n".join(lines) + "\n"


# Job loading and config serialization ---------------------------------------------


def load_job_dir(path: str | Path, config: PipelineConfig) -> RestorationJob:
    """Load a job directory: image.png, pose.json, detections.json, optional silhouette.png."""
    from .protocol import validate_detection_file, validate_pose_file
    from .raster import load_mask

    path = Path(path)
    image_path = path / "image.png"
    job_kwargs = {}
    sil_path = path / "silhouette.png"
    if sil_path.is_file():
        job_kwargs["target_silhouette"] = load_mask(sil_path)
    return RestorationJob(
        image=load_rgb(image_path),
        image_path=image_path,
        pose=validate_pose_file(path / "pose.json"),
        detections=validate_detection_file(path / "detections.json"),
        config=config,
        **job_kwargs,
    )


def ablation_from_dict(doc: Mapping) -> AblationConfig:
    known = {f.name for f in dataclasses.fields(AblationConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ValueError(f"unknown ablation flags: {sorted(unknown)}")
    return AblationConfig(**{k: bool(v) for k, v in doc.items()})


def config_from_dict(doc: Mapping) -> PipelineConfig:
    kwargs: dict = {}
    if "selection_mode" in doc:
        kwargs["selection_mode"] = str(doc["selection_mode"])
    if "seed" in doc:
        kwargs["seed"] = int(doc["seed"])
    if "scale_factors" in doc:
        kwargs["scale_factors"] = tuple(float(f) for f in doc["scale_factors"])
    if "malformed_threshold" in doc:
        kwargs["malformed_threshold"] = float(doc["malformed_threshold"])
    if "force_all" in doc:
        kwargs["force_all"] = bool(doc["force_all"])
    if "ablation" in doc:
        kwargs["ablation"] = ablation_from_dict(doc["ablation"])
    return PipelineConfig(**kwargs)
