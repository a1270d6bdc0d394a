import math

import cv2
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from stmae.scoring import (
    ScoreSeries,
    auc_report,
    error_map,
    export_error_map,
    frame_auc,
    normalize_scores,
    psnr_error,
    roc_auc,
)


class TestPSNR:
    def test_uniform_16_levels(self):
        target = np.full((8, 8, 3), 0.5)
        assert psnr_error(target + 16 / 255, target) == pytest.approx(10 * math.log10(65025 / 256), abs=1e-9)
        assert psnr_error(target + 16 / 255, target) == pytest.approx(24.05, abs=0.01)

    def test_identical_frames_clamped(self):
        x = np.random.default_rng(0).random((4, 4))
        assert psnr_error(x, x) == pytest.approx(10 * math.log10(65025 / 1e-10))

    def test_doubling_error_drops_6db(self):
        t = np.zeros((4, 4))
        drop = psnr_error(t + 16 / 255, t) - psnr_error(t + 32 / 255, t)
        assert drop == pytest.approx(20 * math.log10(2), abs=1e-9)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            psnr_error(np.zeros((2, 2)), np.zeros((2, 3)))

    @given(a=st.floats(1e-4, 1.0), b=st.floats(1e-4, 1.0))
    def test_strictly_decreasing_in_error(self, a, b):
        t = np.zeros(4)
        if a < b:
            assert psnr_error(t + a, t) > psnr_error(t + b, t)


class TestNormalize:
    def test_basic(self):
        np.testing.assert_allclose(normalize_scores([20, 30, 25]), [0, 1, 0.5])

    def test_degenerate(self):
        np.testing.assert_allclose(normalize_scores([7.0]), [0.5])
        np.testing.assert_allclose(normalize_scores([3, 3, 3]), [0.5] * 3)

    def test_empty(self):
        with pytest.raises(ValueError):
            normalize_scores([])

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50))
    def test_range(self, xs):
        s = normalize_scores(xs)
        assert np.all((s >= 0) & (s <= 1))

    @given(st.lists(st.floats(-100, 100), min_size=2, max_size=30), st.floats(0.1, 10), st.floats(-50, 50))
    def test_affine_invariance(self, xs, alpha, beta):
        e = np.array(xs)
        if np.ptp(e) > 1e-3:
            np.testing.assert_allclose(normalize_scores(alpha * e + beta), normalize_scores(e), atol=1e-9)


class TestAUC:
    def test_perfect_separation(self):
        assert roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            roc_auc([0.1, 0.2], [1, 1])

    def test_ties_count_half(self):
        assert roc_auc([0.5, 0.5], [0, 1]) == 0.5

    @pytest.mark.parametrize("seed", range(25))
    def test_matches_pair_counting(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 201))
        labels = rng.integers(0, 2, n)
        labels[0], labels[1] = 0, 1
        scores = np.round(rng.random(n), 2)  # coarse rounding forces ties
        assert roc_auc(scores, labels) == pytest.approx(oracles.pairwise_auc(scores, labels), abs=1e-9)

    def test_random_labels_near_half(self):
        rng = np.random.default_rng(0)
        assert abs(roc_auc(rng.random(10_000), rng.integers(0, 2, 10_000)) - 0.5) < 0.05

    @settings(max_examples=30)
    @given(st.integers(0, 10_000))
    def test_monotone_transform_invariance(self, seed):
        rng = np.random.default_rng(seed)
        s, y = rng.random(50), rng.integers(0, 2, 50)
        y[:2] = [0, 1]
        assert roc_auc(np.exp(3 * s) + 1, y) == pytest.approx(roc_auc(s, y), abs=1e-12)

    def test_frame_auc_uses_inverted_regularity(self):
        # low PSNR on anomalous frames -> high anomaly score
        s = ScoreSeries("v", [4, 5, 6, 7], [40.0, 38.0, 20.0, 22.0], [0, 0, 1, 1])
        np.testing.assert_allclose(s.regularity, [1, 0.9, 0, 0.1])
        assert frame_auc([s]) == 1.0

    def test_per_video_vs_global(self):
        a = ScoreSeries("a", [0, 1], [30.0, 20.0], [0, 1])
        b = ScoreSeries("b", [0, 1], [60.0, 50.0], [0, 1])
        assert frame_auc([a, b], "per-video") == 1.0
        assert frame_auc([a, b], "global") == pytest.approx(0.75)
        with pytest.raises(ValueError):
            frame_auc([a], "bogus")

    def test_report(self):
        a = ScoreSeries("a", [4, 5, 6], [30.0, 20.0, 31.0], [0, 1, 0])
        b = ScoreSeries("b", [4, 5], [30.0, 20.0], [0, 0])
        rep = auc_report([a, b])
        assert rep["per_video_auc"] == {"a": 1.0, "b": None}
        assert rep["total_frames"] == 5 and rep["anomalous_frames"] == 1


def test_score_csv_roundtrip(tmp_path):
    s = ScoreSeries("v", [4, 5, 6], [30.0, 20.5, 25.25], [0, 1, 0])
    s.to_csv(tmp_path / "v.csv")
    header = (tmp_path / "v.csv").read_text().splitlines()[0]
    assert header == "frame_index,e_t,s_t,a_t,label"
    again = ScoreSeries.from_csv(tmp_path / "v.csv")
    np.testing.assert_array_equal(again.psnr, s.psnr)
    np.testing.assert_array_equal(again.labels, s.labels)


def test_error_map_export(tmp_path):
    rng = np.random.default_rng(0)
    target = rng.random((16, 16, 3))
    pred = target.copy()
    pred[4:8, 4:8] += 0.3
    m = error_map(pred, target)
    assert m.max() == 1.0 and m.min() == 0.0
    assert m[4:8, 4:8].min() > m[0:4, 0:4].max()
    out = export_error_map(pred.clip(0, 1), target, tmp_path / "maps" / "f.png")
    img = cv2.imread(str(out))
    assert img.shape == (16, 16, 3) and img.dtype == np.uint8
    assert (tmp_path / "maps" / "f_pred.png").exists() and (tmp_path / "maps" / "f_target.png").exists()
