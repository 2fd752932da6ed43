import math

import numpy as np
import pytest
from skimage.metrics import structural_similarity

from handmend.metrics import (
    ClassifierRecord,
    EmptyDataset,
    EmptyRecord,
    HandPoseRecord,
    LengthMismatch,
    MaskCoversImage,
    MetricsReport,
    NoValidWindows,
    ZeroVariance,
    format_report_table,
    load_classifier_records,
    load_pose_records,
    luma,
    masked_psnr,
    masked_ssim,
    mean_classifier_confidence,
    mean_pose_confidence,
    pearson,
    save_classifier_records,
    save_pose_records,
)
from handmend.raster import BinaryMask, DimensionMismatch, RgbImage
from tests.conftest import textured_image


class TestPoseConfidence:
    def test_all_ones(self):
        records = [HandPoseRecord(f"h{i}", {j: 1.0 for j in range(5)}) for i in range(4)]
        assert mean_pose_confidence(records) == 1.0

    def test_unweighted_outer_mean(self):
        records = [
            HandPoseRecord("a", {0: 0.2, 1: 0.4}),
            HandPoseRecord("b", {0: 1.0}),
        ]
        assert mean_pose_confidence(records) == pytest.approx(0.65, abs=1e-15)

    def test_single_keypoint(self):
        assert mean_pose_confidence([HandPoseRecord("a", {3: 0.37})]) == 0.37

    def test_empty_dataset(self):
        with pytest.raises(EmptyDataset):
            mean_pose_confidence([])

    def test_empty_record(self):
        with pytest.raises(EmptyRecord):
            mean_pose_confidence([HandPoseRecord("a", {})])

    def test_reorder_invariance(self):
        rng = np.random.default_rng(0)
        records = [
            HandPoseRecord(f"h{i}", {j: float(rng.random()) for j in range(int(rng.integers(1, 8)))})
            for i in range(10)
        ]
        assert mean_pose_confidence(records) == pytest.approx(
            mean_pose_confidence(list(reversed(records))), abs=1e-12
        )

    def test_against_brute_force(self):
        rng = np.random.default_rng(99)
        for _ in range(20):
            records = [
                HandPoseRecord(
                    f"h{i}", {j: float(rng.random()) for j in range(int(rng.integers(1, 21)))}
                )
                for i in range(int(rng.integers(1, 15)))
            ]
            total = 0.0
            for r in records:
                inner = 0.0
                for v in r.keypoint_confidences.values():
                    inner += v
                total += inner / len(r.keypoint_confidences)
            assert mean_pose_confidence(records) == pytest.approx(total / len(records), abs=1e-12)


class TestClassifierConfidence:
    def test_all_zero(self):
        assert mean_classifier_confidence([ClassifierRecord(f"h{i}", 0.0) for i in range(5)]) == 0.0

    def test_two_records(self):
        records = [ClassifierRecord("a", 0.2), ClassifierRecord("b", 0.3)]
        assert mean_classifier_confidence(records) == pytest.approx(0.25, abs=1e-15)

    def test_single_record(self):
        assert mean_classifier_confidence([ClassifierRecord("a", 0.25)]) == 0.25

    def test_empty(self):
        with pytest.raises(EmptyDataset):
            mean_classifier_confidence([])

    def test_bounds_validated(self):
        with pytest.raises(ValueError):
            ClassifierRecord("a", 1.2)


def _mask_rect(h, w, y0, y1, x0, x1) -> BinaryMask:
    bits = np.zeros((h, w), bool)
    bits[y0:y1, x0:x1] = True
    return BinaryMask(bits)


class TestMaskedPsnr:
    def test_identical_images_infinite(self):
        rng = np.random.default_rng(1)
        a = RgbImage(rng.integers(0, 256, (20, 20, 3), dtype=np.uint8))
        assert masked_psnr(a, a, _mask_rect(20, 20, 5, 10, 5, 10)) == math.inf

    def test_constant_offset_closed_form(self):
        rng = np.random.default_rng(2)
        pixels = rng.integers(0, 240, (32, 40, 3)).astype(np.uint8)
        a = RgbImage(pixels)
        mask = _mask_rect(32, 40, 8, 16, 10, 20)
        shifted = pixels.copy()
        outside = ~mask.bits
        shifted[outside, 0] += 16
        b = RgbImage(shifted)
        expected = 10 * math.log10(255**2 / (16**2 / 3))
        assert masked_psnr(a, b, mask) == pytest.approx(expected, abs=1e-6)

    def test_differences_inside_mask_ignored(self):
        rng = np.random.default_rng(3)
        pixels = rng.integers(0, 256, (16, 16, 3), dtype=np.uint8)
        a = RgbImage(pixels)
        mask = _mask_rect(16, 16, 4, 12, 4, 12)
        scrambled = pixels.copy()
        scrambled[mask.bits] = 255 - scrambled[mask.bits]
        assert masked_psnr(a, RgbImage(scrambled), mask) == math.inf

    def test_mask_covers_image(self):
        a = RgbImage(np.zeros((8, 8, 3), np.uint8))
        with pytest.raises(MaskCoversImage):
            masked_psnr(a, a, BinaryMask(np.ones((8, 8), bool)))

    def test_dimension_mismatch(self):
        a = RgbImage(np.zeros((8, 8, 3), np.uint8))
        b = RgbImage(np.zeros((8, 9, 3), np.uint8))
        with pytest.raises(DimensionMismatch):
            masked_psnr(a, b, BinaryMask.zeros(8, 8))

    def test_symmetry(self):
        rng = np.random.default_rng(4)
        a = RgbImage(rng.integers(0, 256, (12, 12, 3), dtype=np.uint8))
        b = RgbImage(rng.integers(0, 256, (12, 12, 3), dtype=np.uint8))
        m = _mask_rect(12, 12, 2, 5, 2, 5)
        assert masked_psnr(a, b, m) == masked_psnr(b, a, m)

    def test_growing_mask_over_differences_never_decreases(self):
        rng = np.random.default_rng(5)
        pixels = rng.integers(0, 256, (16, 16, 3), dtype=np.uint8)
        a = RgbImage(pixels)
        noisy = pixels.copy()
        noisy[4:8, 4:8] = rng.integers(0, 256, (4, 4, 3))
        b = RgbImage(noisy)
        small = _mask_rect(16, 16, 4, 6, 4, 8)
        large = _mask_rect(16, 16, 4, 8, 4, 8)
        assert masked_psnr(a, b, large) >= masked_psnr(a, b, small)


class TestMaskedSsim:
    def test_identical_images_exactly_one(self):
        rng = np.random.default_rng(6)
        a = RgbImage(rng.integers(0, 256, (40, 40, 3), dtype=np.uint8))
        assert masked_ssim(a, a, BinaryMask.zeros(40, 40)) == 1.0

    def test_differences_inside_mask_with_margin(self):
        rng = np.random.default_rng(7)
        pixels = rng.integers(0, 256, (48, 48, 3), dtype=np.uint8)
        a = RgbImage(pixels)
        mask = _mask_rect(48, 48, 12, 36, 12, 36)
        edited = pixels.copy()
        edited[18:30, 18:30] = 255 - edited[18:30, 18:30]  # >= 5 px inside the mask
        assert masked_ssim(a, RgbImage(edited), mask) == 1.0

    def test_negated_image_scores_low(self):
        rng = np.random.default_rng(8)
        a = textured_image(rng, 96, 96)
        b = RgbImage((255 - a.pixels).astype(np.uint8))
        assert masked_ssim(a, b, BinaryMask.zeros(96, 96)) < 0.1

    def test_matches_reference_implementation(self):
        rng = np.random.default_rng(9)
        for _ in range(5):
            a = textured_image(rng, 72, 88)
            noise = rng.integers(-25, 26, a.pixels.shape)
            b = RgbImage(np.clip(a.pixels.astype(np.int32) + noise, 0, 255).astype(np.uint8))
            mine = masked_ssim(a, b, BinaryMask.zeros(72, 88))
            _, smap = structural_similarity(
                luma(a), luma(b), data_range=255, gaussian_weights=True,
                sigma=1.5, use_sample_covariance=False, full=True,
            )
            assert mine == pytest.approx(smap[5:-5, 5:-5].mean(), abs=1e-4)

    def test_no_valid_windows(self):
        a = RgbImage(np.zeros((20, 20, 3), np.uint8))
        with pytest.raises(NoValidWindows):
            masked_ssim(a, a, BinaryMask(np.ones((20, 20), bool)))

    def test_image_smaller_than_window(self):
        a = RgbImage(np.zeros((8, 8, 3), np.uint8))
        with pytest.raises(NoValidWindows):
            masked_ssim(a, a, BinaryMask.zeros(8, 8))


class TestPearson:
    def test_positive_affine(self):
        xs = [1.0, 2.0, 5.0, 7.0]
        ys = [2 * x + 1 for x in xs]
        assert pearson(xs, ys) == pytest.approx(1.0, abs=1e-12)

    def test_negation(self):
        xs = [1.0, 2.0, 3.5]
        assert pearson(xs, [-x for x in xs]) == pytest.approx(-1.0, abs=1e-12)

    def test_known_value(self):
        assert pearson([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5, abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            pearson([1, 2], [1, 2, 3])
        with pytest.raises(LengthMismatch):
            pearson([1], [2])

    def test_zero_variance(self):
        with pytest.raises(ZeroVariance):
            pearson([1, 1, 1], [1, 2, 3])

    def test_affine_invariance(self):
        rng = np.random.default_rng(10)
        xs = rng.normal(size=30)
        ys = rng.normal(size=30)
        base = pearson(list(xs), list(ys))
        assert pearson(list(3.5 * xs + 2), list(ys)) == pytest.approx(base, abs=1e-12)
        assert pearson(list(xs), list(0.25 * ys - 9)) == pytest.approx(base, abs=1e-12)


class TestRecordIo:
    def test_pose_round_trip(self, tmp_path):
        records = [
            HandPoseRecord("img1/h0", {0: 0.5, 7: 0.25}),
            HandPoseRecord("img2/h1", {3: 1.0}),
        ]
        save_pose_records(records, tmp_path / "pose.jsonl")
        assert load_pose_records(tmp_path / "pose.jsonl") == records

    def test_classifier_round_trip(self, tmp_path):
        records = [ClassifierRecord("a", 0.125), ClassifierRecord("b", 1.0)]
        save_classifier_records(records, tmp_path / "cls.jsonl")
        assert load_classifier_records(tmp_path / "cls.jsonl") == records


class TestReportTable:
    def test_column_order_and_inf(self):
        report = MetricsReport(0.79, 0.25, math.inf, 0.6462, 1000)
        table = format_report_table([("run", report)])
        header, row = table.strip().splitlines()
        assert header.split() == ["method", "c_pose", "c_classifier", "psnr_db", "ssim"]
        assert row.split() == ["run", "0.7900", "0.2500", "+inf", "0.6462"]

    def test_finite_psnr_formatting(self):
        report = MetricsReport(0.5, 0.5, 23.4, 0.5, 2)
        assert "23.40" in format_report_table([("x", report)])
