"""Batch command-line front end.

Exit codes: 0 success, 2 input validation, 3 degenerate geometry,
4 backend failure. Outputs land only inside the --out directory.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import metrics, pipeline, protocol, raster, selection, templates
from .geometry import DegenerateKeypoints
from .procedural import builtin_library
from .rng import splitmix64

_ABLATE_FLAGS = {
    "no-bbox-mask": "use_bbox_mask",
    "no-template-mask": "use_template_mask",
    "no-scale": "use_scale",
    "no-translation": "use_translation",
    "no-rotation": "use_rotation",
    "no-handedness": "use_handedness",
}

_VALIDATION_ERRORS = (
    protocol.ParseError,
    protocol.InvariantViolation,
    protocol.FileMissing,
    templates.ManifestParseError,
    templates.TemplateInvalid,
    templates.DuplicateId,
    raster.DimensionMismatch,
    raster.EmptyIntersection,
    raster.EmptyMask,
    raster.BothEmpty,
    metrics.EmptyDataset,
    metrics.EmptyRecord,
    metrics.LengthMismatch,
    metrics.MaskCoversImage,
    metrics.NoValidWindows,
    metrics.ZeroVariance,
    pipeline.NoMaskEnabled,
    ValueError,
    KeyError,
    OSError,
)


def _die(code: int, message: str) -> None:
    click.echo(f"handmend: {message}", err=True)
    sys.exit(code)


def _execute(body) -> None:
    try:
        body()
    except (DegenerateKeypoints, selection.NoViableTemplate) as exc:
        _die(3, str(exc))
    except (pipeline.AllScalesFailed, protocol.BackendFailure) as exc:
        _die(4, str(exc))
    except _VALIDATION_ERRORS as exc:
        _die(2, str(exc))


def _load_templates(spec: str) -> templates.TemplateLibrary:
    if spec == "builtin":
        return builtin_library()
    return templates.load_library(spec)


def _build_config(
    config_path: str | None,
    select: str | None,
    seed: int | None,
    scales: str | None,
    threshold: float | None,
    force_all: bool,
    ablate: tuple[str, ...] = (),
) -> pipeline.PipelineConfig:
    doc: dict = {}
    if config_path:
        doc = json.loads(Path(config_path).read_text(encoding="utf-8"))
        if not isinstance(doc, dict):
            raise ValueError(f"{config_path}: config must be a JSON object")
    if select is not None:
        doc["selection_mode"] = select
    if seed is not None:
        doc["seed"] = seed
    if scales is not None:
        doc["scale_factors"] = [float(s) for s in scales.split(",") if s.strip()]
    if threshold is not None:
        doc["malformed_threshold"] = threshold
    if force_all:
        doc["force_all"] = True
    if ablate:
        ablation = dict(doc.get("ablation", {}))
        for name in ablate:
            ablation[_ABLATE_FLAGS[name]] = False
        doc["ablation"] = ablation
    return pipeline.config_from_dict(doc)


def _load_job(
    image: str,
    pose_path: str,
    det_path: str,
    silhouette_path: str | None,
    config: pipeline.PipelineConfig,
) -> pipeline.RestorationJob:
    if config.selection_mode == "silhouette" and silhouette_path is None:
        raise ValueError("--select silhouette requires --silhouette <png>")
    return pipeline.RestorationJob(
        image=raster.load_rgb(image),
        image_path=Path(image),
        pose=protocol.validate_pose_file(pose_path),
        detections=protocol.validate_detection_file(det_path),
        config=config,
        target_silhouette=raster.load_mask(silhouette_path) if silhouette_path else None,
    )


def _job_options(f):
    f = click.option("--image", required=True, type=click.Path(exists=True, dir_okay=False))(f)
    f = click.option("--pose", "pose_path", required=True, type=click.Path(exists=True, dir_okay=False))(f)
    f = click.option("--detections", "det_path", required=True, type=click.Path(exists=True, dir_okay=False))(f)
    f = click.option("--templates", "templates_spec", default="builtin", show_default=True,
                     help="Template manifest path, or 'builtin' for the bundled library.")(f)
    f = click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))(f)
    f = click.option("--hand", "hand_id", default=None, help="Restrict to one hand id.")(f)
    f = click.option("--select", type=click.Choice(["silhouette", "random"]), default=None)(f)
    f = click.option("--silhouette", "silhouette_path", type=click.Path(exists=True, dir_okay=False), default=None)(f)
    f = click.option("--seed", type=int, default=None)(f)
    f = click.option("--threshold", type=float, default=None)(f)
    f = click.option("--force-all", is_flag=True, help="Restore every detected hand.")(f)
    f = click.option("--ablate", multiple=True, type=click.Choice(sorted(_ABLATE_FLAGS)))(f)
    f = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)(f)
    return f


@click.group()
def main() -> None:
    """Repair malformed hands with aligned depth templates and masked inpainting."""


@main.command("make-control")
@_job_options
def cmd_make_control(image, pose_path, det_path, templates_spec, out_dir, hand_id,
                     select, silhouette_path, seed, threshold, force_all, ablate, config_path):
    """Write the control image, control mask, and bundle JSON for one hand."""

    def body():
        config = _build_config(config_path, select, seed, None, threshold, force_all, ablate)
        library = _load_templates(templates_spec)
        job = _load_job(image, pose_path, det_path, silhouette_path, config)
        hands = [hand_id] if hand_id else pipeline.eligible_hands(job)
        if not hands:
            raise ValueError("no eligible hands (try --force-all or --hand)")
        hand = hands[0]
        template = pipeline.pick_template(job, hand, library)
        bundle = pipeline.build_control_bundle(job, hand, template)

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        control_name = f"{hand}_control.png"
        mask_name = f"{hand}_mask.png"
        raster.save_depth(bundle.control_image, out / control_name)
        raster.save_mask(bundle.control_mask, out / mask_name)
        doc = {"image_id": job.image_id, "hand_id": hand,
               **pipeline.bundle_to_dict(bundle, control_name, mask_name)}
        (out / f"{hand}_bundle.json").write_text(
            json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        click.echo(f"wrote {control_name}, {mask_name}, {hand}_bundle.json in {out}")

    _execute(body)


@main.command("restore")
@_job_options
@click.option("--backend", "backend_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Backend executable; defaults to the bundled stub.")
@click.option("--scales", default=None, help="Comma-separated mask scale factors.")
def cmd_restore(image, pose_path, det_path, templates_spec, out_dir, hand_id, select,
                silhouette_path, seed, threshold, force_all, ablate, config_path,
                backend_path, scales):
    """Restore the eligible hands of one image and write outcome JSONs."""

    def body():
        config = _build_config(config_path, select, seed, scales, threshold, force_all, ablate)
        library = _load_templates(templates_spec)
        job = _load_job(image, pose_path, det_path, silhouette_path, config)
        backend = (
            protocol.SubprocessBackend(backend_path) if backend_path else protocol.StubBackend()
        )
        hands = [hand_id] if hand_id else pipeline.eligible_hands(job)
        if not hands:
            raise ValueError("no eligible hands (try --force-all or --hand)")

        out = Path(out_dir)
        work = out / "work"
        current = job.image_path
        last = None
        for index, hand in enumerate(hands):
            outcome = pipeline.restore_hand(
                job, hand, library, backend, work,
                source_image_path=current,
                request_seed=splitmix64(config.seed + index),
            )
            current = outcome.restored_path
            last = outcome
            (out / f"{hand}_outcome.json").write_text(
                json.dumps(pipeline.outcome_to_dict(outcome, job.image_id), indent=2, sort_keys=True) + "\n",
                encoding="utf-8",
            )
        raster.save_rgb(last.restored, out / "restored.png")
        click.echo(f"restored {len(hands)} hand(s) -> {out / 'restored.png'}")

    _execute(body)


@main.command("evaluate")
@click.option("--original", "originals", multiple=True, required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--restored", "restoreds", multiple=True, required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--mask", "masks", multiple=True, required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--pose-records", "pose_records_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--classifier-records", "classifier_records_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--label", default="evaluated", show_default=True)
def cmd_evaluate(originals, restoreds, masks, pose_records_path, classifier_records_path,
                 out_dir, label):
    """Score paired original/restored images plus confidence record files."""

    def body():
        if not (len(originals) == len(restoreds) == len(masks)):
            raise metrics.LengthMismatch(
                f"{len(originals)} originals, {len(restoreds)} restored, {len(masks)} masks"
            )
        psnr_values = []
        ssim_values = []
        for orig_path, rest_path, mask_path in zip(originals, restoreds, masks):
            original = raster.load_rgb(orig_path)
            restored = raster.load_rgb(rest_path)
            region = raster.load_mask(mask_path)
            psnr_values.append(metrics.masked_psnr(original, restored, region))
            ssim_values.append(metrics.masked_ssim(original, restored, region))
        pose_records = metrics.load_pose_records(pose_records_path)
        classifier_records = metrics.load_classifier_records(classifier_records_path)
        report = metrics.MetricsReport(
            mean_pose_confidence=metrics.mean_pose_confidence(pose_records),
            mean_classifier_confidence=metrics.mean_classifier_confidence(classifier_records),
            masked_psnr_db=sum(psnr_values) / len(psnr_values),
            masked_ssim=sum(ssim_values) / len(ssim_values),
            n_hands=len(classifier_records),
        )
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(
            json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        table = metrics.format_report_table([(label, report)])
        (out / "report.txt").write_text(table, encoding="utf-8")
        click.echo(table, nl=False)

    _execute(body)


@main.command("ablate")
@click.option("--jobs-dir", required=True, type=click.Path(exists=True, file_okay=False),
              help="Directory of job subdirectories (image.png, pose.json, detections.json).")
@click.option("--grid", "grid_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="JSON list of ablation flag objects, one row per entry.")
@click.option("--templates", "templates_spec", default="builtin", show_default=True)
@click.option("--backend", "backend_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--select", type=click.Choice(["silhouette", "random"]), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--scales", default=None)
@click.option("--threshold", type=float, default=None)
@click.option("--force-all", is_flag=True)
@click.option("--jobs", "workers", type=int, default=1, show_default=True,
              help="Parallel workers across images.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
def cmd_ablate(jobs_dir, grid_path, templates_spec, backend_path, out_dir, select, seed,
               scales, threshold, force_all, workers, config_path):
    """Run the ablation grid over a job directory and write a TSV."""

    def body():
        grid_doc = json.loads(Path(grid_path).read_text(encoding="utf-8"))
        if not isinstance(grid_doc, list) or not grid_doc:
            raise ValueError(f"{grid_path}: grid must be a nonempty JSON list")
        configs = [pipeline.ablation_from_dict(row) for row in grid_doc]
        config = _build_config(config_path, select, seed, scales, threshold, force_all)
        library = _load_templates(templates_spec)
        job_dirs = sorted(p for p in Path(jobs_dir).iterdir() if p.is_dir())
        if not job_dirs:
            raise ValueError(f"{jobs_dir}: no job subdirectories")
        jobs = [pipeline.load_job_dir(p, config) for p in job_dirs]
        backend = (
            protocol.SubprocessBackend(backend_path) if backend_path else protocol.StubBackend()
        )
        rows = pipeline.run_ablation(
            jobs, library, backend, configs, Path(out_dir), workers=workers
        )
        grid = pipeline.format_ablation_grid(rows)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "ablation.tsv").write_text(grid, encoding="utf-8")
        click.echo(grid, nl=False)

    _execute(body)


@main.command("select-template")
@click.option("--templates", "templates_spec", default="builtin", show_default=True)
@click.option("--pose", "pose_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--hand", "hand_id", default=None)
@click.option("--select", type=click.Choice(["silhouette", "random"]), default="random",
              show_default=True)
@click.option("--silhouette", "silhouette_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--seed", type=int, default=0, show_default=True)
def cmd_select_template(templates_spec, pose_path, hand_id, select, silhouette_path, seed):
    """Print the selected template for one hand as JSON."""

    def body():
        library = _load_templates(templates_spec)
        pose = protocol.validate_pose_file(pose_path)
        if select == "silhouette":
            if silhouette_path is None:
                raise ValueError("--select silhouette requires --silhouette <png>")
            if not pose.hands:
                raise ValueError("pose estimate contains no hands")
            hand = pose.hand(hand_id) if hand_id else pose.hands[0]
            result = selection.silhouette_consistent_select(
                library, hand.keypoints, raster.load_mask(silhouette_path)
            )
        else:
            result = selection.random_select(library, seed)
        doc = {
            "template_id": result.template_id,
            "score": result.score,
            "transform": (
                pipeline.transform_to_dict(result.transform) if result.transform else None
            ),
        }
        click.echo(json.dumps(doc, indent=2, sort_keys=True))

    _execute(body)


if __name__ == "__main__":
    main()
