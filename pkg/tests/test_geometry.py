import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from handmend.geometry import (
    DEFAULT_ANCHORS,
    DegenerateKeypoints,
    Handedness,
    Keypoint,
    KeypointSet,
    Point2,
    SimilarityTransform,
    estimate_alignment,
    infer_chirality,
)
from handmend.procedural import builtin_library


def close(p: Point2, q: Point2, tol: float = 1e-9) -> bool:
    return abs(p.x - q.x) <= tol and abs(p.y - q.y) <= tol


transforms = st.builds(
    SimilarityTransform,
    scale=st.floats(0.1, 10.0),
    angle=st.floats(-math.pi, math.pi),
    translation=st.builds(Point2, st.floats(-100, 100), st.floats(-100, 100)),
    mirror=st.booleans(),
)
unit_points = st.builds(Point2, st.floats(0, 1), st.floats(0, 1))


class TestApply:
    def test_identity(self):
        assert SimilarityTransform.identity().apply(Point2(3.5, -2)) == Point2(3.5, -2)

    def test_pure_scale(self):
        t = SimilarityTransform(scale=2.0)
        assert t.apply(Point2(1, 1)) == Point2(2, 2)

    def test_quarter_turn(self):
        t = SimilarityTransform(angle=math.pi / 2)
        p = t.apply(Point2(1, 0))
        assert close(p, Point2(0, 1), 1e-12)

    def test_mirror_negates_x_first(self):
        t = SimilarityTransform(mirror=True)
        assert t.apply(Point2(2, 3)) == Point2(-2, 3)

    @given(transforms, unit_points, unit_points)
    def test_preserves_distance_ratios(self, t, p, q):
        d_before = (p - q).norm()
        d_after = (t.apply(p) - t.apply(q)).norm()
        assert d_after == pytest.approx(t.scale * d_before, rel=1e-9, abs=1e-12)


class TestCompose:
    def test_identity_composition(self):
        ident = SimilarityTransform.identity()
        assert ident.compose(ident) == ident

    def test_scale_multiplies(self):
        c = SimilarityTransform(scale=2.0).compose(SimilarityTransform(scale=3.0))
        assert c.scale == pytest.approx(6.0)
        assert c.angle == 0.0

    def test_angle_adds(self):
        c = SimilarityTransform(angle=math.pi / 2).compose(SimilarityTransform(angle=math.pi / 2))
        assert c.angle == pytest.approx(math.pi)

    @given(transforms, transforms, unit_points)
    def test_matches_sequential_application(self, outer, inner, p):
        via_compose = outer.compose(inner).apply(p)
        sequential = outer.apply(inner.apply(p))
        assert close(via_compose, sequential, 1e-9)

    @given(transforms, unit_points)
    @settings(max_examples=200)
    def test_inverse_round_trip(self, t, p):
        assert close(t.inverse().apply(t.apply(p)), p, 1e-9)
        assert close(t.apply(t.inverse().apply(p)), p, 1e-9)


class TestAngleNormalization:
    def test_range(self):
        assert SimilarityTransform(angle=3 * math.pi).angle == pytest.approx(math.pi)
        assert SimilarityTransform(angle=-math.pi).angle == math.pi

    def test_tie_at_pi_resolves_positive(self):
        assert SimilarityTransform(angle=math.pi).angle == math.pi


def _palm_keypoints() -> KeypointSet:
    return builtin_library().get("palm_spread").keypoints


class TestEstimateAlignment:
    def test_identity_when_sets_equal(self):
        kps = _palm_keypoints()
        est = estimate_alignment(kps, kps)
        assert est.scale == pytest.approx(1.0)
        assert est.angle == pytest.approx(0.0)
        assert not est.mirror
        assert close(est.translation, Point2(0, 0), 1e-9)

    def test_doubled_points_give_scale_two(self):
        kps = _palm_keypoints()
        doubled = kps.map(SimilarityTransform(scale=2.0))
        est = estimate_alignment(kps, doubled)
        assert est.scale == pytest.approx(2.0)
        assert est.angle == pytest.approx(0.0)
        assert not est.mirror

    def test_reflected_set_detected_as_mirror(self):
        kps = _palm_keypoints()
        reflected = kps.mirrored_x()
        est = estimate_alignment(kps, reflected)
        assert est.mirror
        for kp in kps:
            assert close(est.apply(kp.point), reflected.point(kp.id), 1e-6)

    def test_recovers_random_ground_truth(self):
        kps = _palm_keypoints()
        rng = np.random.default_rng(42)
        for _ in range(200):
            g = SimilarityTransform(
                scale=float(np.exp(rng.uniform(-1, 1))),
                angle=float(rng.uniform(-math.pi, math.pi)),
                translation=Point2(float(rng.uniform(-200, 200)), float(rng.uniform(-200, 200))),
                mirror=bool(rng.integers(2)),
            )
            est = estimate_alignment(kps, kps.map(g))
            assert est.scale == pytest.approx(g.scale, rel=1e-6)
            assert abs(math.remainder(est.angle - g.angle, 2 * math.pi)) < 1e-6
            assert est.mirror == g.mirror

    def test_anchor_reproduction(self):
        kps = _palm_keypoints()
        g = SimilarityTransform(1.7, 0.9, Point2(12, -8), False)
        detected = kps.map(g)
        est = estimate_alignment(kps, detected)
        for anchor in DEFAULT_ANCHORS:
            assert close(est.apply(kps.point(anchor)), detected.point(anchor), 1e-6)

    def test_missing_anchor_raises(self):
        kps = _palm_keypoints()
        partial = KeypointSet(tuple(kp for kp in kps if kp.id != 9))
        with pytest.raises(DegenerateKeypoints):
            estimate_alignment(kps, partial)

    def test_coincident_anchors_raise(self):
        kps = _palm_keypoints()
        squashed = KeypointSet(
            tuple(Keypoint(kp.id, Point2(1.0, 1.0), kp.confidence) for kp in kps)
        )
        with pytest.raises(DegenerateKeypoints):
            estimate_alignment(kps, squashed)


class TestChirality:
    def test_fixed_example_and_its_mirror(self):
        kps = KeypointSet.from_points({0: (0, 0), 5: (-1, -2), 17: (1, -2)})
        first = infer_chirality(kps)
        flipped = infer_chirality(kps.mirrored_x())
        assert first is Handedness.RIGHT
        assert flipped is Handedness.LEFT

    def test_collinear_raises(self):
        kps = KeypointSet.from_points({0: (0, 0), 5: (1, 1), 17: (2, 2)})
        with pytest.raises(DegenerateKeypoints):
            infer_chirality(kps)

    def test_missing_landmark_raises(self):
        kps = KeypointSet.from_points({0: (0, 0), 5: (1, 1)})
        with pytest.raises(DegenerateKeypoints):
            infer_chirality(kps)

    def test_mirror_flips_over_random_triples(self):
        rng = np.random.default_rng(1234)
        checked = 0
        while checked < 1000:
            pts = rng.uniform(-50, 50, size=(3, 2))
            v1 = pts[1] - pts[0]
            v2 = pts[2] - pts[0]
            if abs(v1[0] * v2[1] - v1[1] * v2[0]) < 1e-6:
                continue
            kps = KeypointSet.from_points(
                {0: tuple(pts[0]), 5: tuple(pts[1]), 17: tuple(pts[2])}
            )
            assert infer_chirality(kps.mirrored_x()) is not infer_chirality(kps)
            checked += 1


class TestKeypointValidation:
    def test_confidence_range(self):
        with pytest.raises(ValueError):
            Keypoint(0, Point2(0, 0), 1.5)

    def test_landmark_range(self):
        with pytest.raises(ValueError):
            Keypoint(21, Point2(0, 0))

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValueError):
            KeypointSet((Keypoint(0, Point2(0, 0)), Keypoint(0, Point2(1, 1))))

    def test_nonfinite_point_rejected(self):
        with pytest.raises(ValueError):
            Point2(float("nan"), 0.0)
