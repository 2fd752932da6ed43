import json

import numpy as np
import pytest

from handmend.geometry import Handedness, Keypoint, KeypointSet, Point2, infer_chirality
from handmend.procedural import builtin_library
from handmend.raster import DepthImage
from handmend.templates import (
    DuplicateId,
    HandTemplate,
    ManifestParseError,
    TemplateInvalid,
    TemplateLibrary,
    load_library,
    mirror_template,
    validate_template,
    write_library,
)


class TestBuiltinLibrary:
    def test_at_least_three_gestures(self, library):
        assert len(library) >= 3
        assert len(set(t.gesture_label for t in library)) >= 3

    def test_every_template_valid(self, library):
        for t in library:
            validate_template(t)

    def test_chirality_matches_declared(self, library):
        for t in library:
            assert infer_chirality(t.keypoints) is t.handedness


class TestMirror:
    def test_involution_on_builtin(self, library):
        for t in library:
            back = mirror_template(mirror_template(t))
            assert back.depth == t.depth
            assert back.keypoints == t.keypoints
            assert back.handedness is t.handedness
            assert back.id == t.id

    def test_handedness_flips(self, library):
        t = library.templates[0]
        assert mirror_template(t).handedness is t.handedness.flipped()

    def test_reflection_formula(self):
        depth = np.zeros((50, 100), np.uint16)
        depth[10:40, 10:90] = 30000
        t = HandTemplate(
            id="synthetic",
            depth=DepthImage(depth),
            keypoints=KeypointSet((Keypoint(0, Point2(10.0, 20.0)),)),
            handedness=Handedness.RIGHT,
            prompt="",
            gesture_label="",
        )
        assert mirror_template(t).keypoints.point(0) == Point2(89.0, 20.0)

    def test_mirrored_template_still_valid(self, library):
        for t in library:
            validate_template(mirror_template(t))


class TestManifestRoundTrip:
    def test_write_then_load(self, library, tmp_path):
        manifest = write_library(library, tmp_path)
        loaded = load_library(manifest)
        assert loaded.ids == library.ids
        for orig in library:
            got = loaded.get(orig.id)
            assert got.depth == orig.depth
            assert got.keypoints == orig.keypoints
            assert got.handedness is orig.handedness
            assert got.prompt == orig.prompt

    def test_manifest_size(self, library, tmp_path):
        manifest = write_library(library, tmp_path)
        assert len(load_library(manifest)) == len(library)


def _manifest_doc(tmp_path, library) -> dict:
    write_library(library, tmp_path)
    return json.loads((tmp_path / "manifest.json").read_text())


class TestManifestErrors:
    def test_missing_file(self, tmp_path):
        with pytest.raises(ManifestParseError):
            load_library(tmp_path / "nope.json")

    def test_bad_json(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text("{not json")
        with pytest.raises(ManifestParseError):
            load_library(path)

    def test_duplicate_id(self, library, tmp_path):
        doc = _manifest_doc(tmp_path, library)
        doc["templates"].append(dict(doc["templates"][0]))
        (tmp_path / "manifest.json").write_text(json.dumps(doc))
        with pytest.raises(DuplicateId):
            load_library(tmp_path / "manifest.json")

    def test_empty_silhouette_rejected(self, library, tmp_path):
        doc = _manifest_doc(tmp_path, library)
        from handmend.raster import save_depth

        save_depth(DepthImage(np.zeros((20, 20), np.uint16)), tmp_path / "blank.png")
        doc["templates"][0]["depth_path"] = "blank.png"
        (tmp_path / "manifest.json").write_text(json.dumps(doc))
        with pytest.raises(TemplateInvalid):
            load_library(tmp_path / "manifest.json")

    def test_keypoint_outside_bounds_rejected(self, library, tmp_path):
        doc = _manifest_doc(tmp_path, library)
        doc["templates"][0]["keypoints"][0]["x"] = 10_000.0
        (tmp_path / "manifest.json").write_text(json.dumps(doc))
        with pytest.raises(TemplateInvalid):
            load_library(tmp_path / "manifest.json")

    def test_handedness_mismatch_rejected(self, library, tmp_path):
        doc = _manifest_doc(tmp_path, library)
        doc["templates"][0]["handedness"] = "left"
        (tmp_path / "manifest.json").write_text(json.dumps(doc))
        with pytest.raises(TemplateInvalid):
            load_library(tmp_path / "manifest.json")


class TestLibraryInvariants:
    def test_empty_library_rejected(self):
        with pytest.raises(ValueError):
            TemplateLibrary(())

    def test_duplicate_ids_rejected(self, library):
        t = library.templates[0]
        with pytest.raises(DuplicateId):
            TemplateLibrary((t, t))

    def test_get_unknown_id(self, library):
        with pytest.raises(KeyError):
            library.get("missing")
