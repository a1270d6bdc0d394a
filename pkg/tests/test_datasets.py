import hashlib
import json

import cv2
import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from stmae.datasets import (
    AnomalyScript,
    Sprite,
    SyntheticScene,
    Video,
    add_salt_pepper,
    generate_synthetic,
    load_dataset,
    load_video,
    make_benchmark,
    render_scene,
    sample_clips,
    synthesize_benchmark,
)


def _hash_dir(d):
    h = hashlib.sha256()
    for p in sorted(d.rglob("*.png")):
        h.update(p.read_bytes())
    return h.hexdigest()


def test_normal_scene_all_labels_zero(tmp_path):
    scene = SyntheticScene([Sprite(position=(5, 5), velocity=(2, 0)), Sprite(position=(30, 40), velocity=(2, 0))])
    generate_synthetic(scene, 100, 7, tmp_path, "v")
    v = load_video(tmp_path, "v", 64)
    assert len(v) == 100
    assert v.labels.sum() == 0


def test_speed_up_labels_exact(tmp_path):
    scene = SyntheticScene([Sprite()], [AnomalyScript(0, 50, 70, "speed-up", 4.0)])
    generate_synthetic(scene, 100, 1, tmp_path, "v")
    lab = np.loadtxt(tmp_path / "labels" / "v.txt")
    assert np.array_equal(np.nonzero(lab)[0], np.arange(50, 71))


def test_speed_up_moves_faster():
    scene = SyntheticScene([Sprite(position=(0, 20), velocity=(1, 0), intensity=1.0)],
                           [AnomalyScript(0, 10, 12, "speed-up", 4.0)], background_contrast=0.0)
    f = render_scene(scene, 14, 0)

    def left(frame):
        return int(np.nonzero(frame[24] == 1.0)[0].min())

    assert left(f[9]) - left(f[8]) == 1
    assert left(f[11]) - left(f[10]) == 4


def test_generation_is_deterministic(tmp_path):
    scene = SyntheticScene([Sprite()], [AnomalyScript(0, 3, 8, "teleport")])
    generate_synthetic(scene, 20, 11, tmp_path / "a", "v")
    generate_synthetic(scene, 20, 11, tmp_path / "b", "v")
    assert _hash_dir(tmp_path / "a") == _hash_dir(tmp_path / "b")


def test_sprite_wraps_around_canvas():
    scene = SyntheticScene([Sprite(position=(60, 10), velocity=(3, 0), size=8)], resolution=64)
    frames = render_scene(scene, 5, 0)
    assert frames.shape == (5, 64, 64)
    assert np.isfinite(frames).all()


def test_too_few_frames_rejected(tmp_path):
    with pytest.raises(ValueError):
        generate_synthetic(SyntheticScene([Sprite()]), 4, 0, tmp_path, "v", k_in=4)


def test_scene_json_roundtrip():
    scene = SyntheticScene([Sprite(shape="circle")], [AnomalyScript(0, 1, 2, "unseen-shape")])
    again = SyntheticScene.from_dict(json.loads(json.dumps(scene.to_dict())))
    assert again == scene


def test_benchmark_train_is_normal_and_test_has_both_classes(tmp_path):
    spec = make_benchmark(seed=0, n_train=2, n_test=3, train_frames=10, test_frames=30, anomaly_span=(10, 15))
    synthesize_benchmark(spec["train"], tmp_path / "train")
    synthesize_benchmark(spec["test"], tmp_path / "test")
    for v in load_dataset(tmp_path / "train"):
        assert v.labels.sum() == 0
    for v in load_dataset(tmp_path / "test", eval_mode=True):
        assert 0 < v.labels.sum() < len(v)


class TestSaltPepper:
    def test_zero_fraction_identity(self):
        x = np.random.default_rng(0).random((4, 16, 16, 3)).astype(np.float32)
        assert np.array_equal(add_salt_pepper(x, 0.0, 1), x)

    def test_full_fraction_binary(self):
        x = np.random.default_rng(0).random((2, 8, 8, 3)).astype(np.float32)
        y = add_salt_pepper(x, 1.0, 1)
        assert np.isin(y, (0.0, 1.0)).all()

    def test_count_on_256(self):
        x = np.full((256, 256, 3), 0.5, np.float32)
        y = add_salt_pepper(x, 0.2, 3)
        changed = (y != 0.5).any(axis=-1)
        assert changed.sum() == 13107
        assert np.array_equal(x, np.full_like(x, 0.5))  # input untouched
        # 50/50 split between pepper and salt
        assert (y[..., 0] == 0).sum() == 13107 // 2

    @settings(max_examples=30, deadline=None)
    @given(frac=st.floats(0.0, 1.0), seed=st.integers(0, 1000), h=st.integers(1, 12))
    def test_count_property(self, frac, seed, h):
        x = np.full((3, h, 5, 3), 0.5, np.float32)
        y = add_salt_pepper(x, frac, seed)
        assert (y != 0.5).any(axis=-1).sum() == round(frac * 3 * h * 5)

    def test_torch_layout(self):
        x = torch.full((2, 4, 3, 8, 8), 0.5)
        y = add_salt_pepper(x, 0.25, 0)
        assert (y != 0.5).any(dim=2).sum().item() == round(0.25 * 2 * 4 * 64)
        assert torch.all(x == 0.5)

    def test_bad_fraction(self):
        with pytest.raises(ValueError):
            add_salt_pepper(np.zeros((2, 2)), 1.5, 0)


class TestClips:
    def video(self, T):
        return Video("v", np.zeros((T, 8, 8, 3), np.float32), np.zeros(T, np.uint8))

    def test_count_and_targets(self):
        clips = list(sample_clips(self.video(100), 4, 1))
        assert len(clips) == 96
        assert [c.target_index for c in clips] == list(range(4, 100))
        assert all(len(c.frames) == 5 and np.all(np.diff(c.indices) == 1) for c in clips)

    def test_minimal_video(self):
        assert len(list(sample_clips(self.video(5), 4))) == 1

    def test_too_short(self):
        with pytest.raises(ValueError):
            list(sample_clips(self.video(4), 4))

    @given(T=st.integers(5, 60), k=st.integers(1, 4))
    def test_eval_coverage(self, T, k):
        assert {c.target_index for c in sample_clips(self.video(T), k, 1)} == set(range(k, T))


class TestLoading:
    def _write(self, root, vid, n, labels=None, size=(40, 48), gray=True):
        d = root / "frames" / vid
        d.mkdir(parents=True)
        rng = np.random.default_rng(0)
        for i in range(n):
            shape = size if gray else size + (3,)
            cv2.imwrite(str(d / f"{i:06d}.png"), rng.integers(0, 256, shape, dtype=np.uint8))
        if labels is not None:
            (root / "labels").mkdir(exist_ok=True)
            np.savetxt(root / "labels" / f"{vid}.txt", labels, fmt="%d")

    def test_resize_scale_and_broadcast(self, tmp_path):
        self._write(tmp_path, "a", 3)
        v = load_video(tmp_path, "a", 64)
        assert v.frames.shape == (3, 64, 64, 3)
        assert v.frames.min() >= 0 and v.frames.max() <= 1
        assert np.array_equal(v.frames[..., 0], v.frames[..., 2])
        assert v.source_resolution == (40, 48)

    def test_npy_labels(self, tmp_path):
        self._write(tmp_path, "a", 3, gray=False)
        (tmp_path / "labels").mkdir()
        np.save(tmp_path / "labels" / "a.npy", np.array([0, 1, 0]))
        from stmae.datasets import DatasetLayout

        v = load_video(tmp_path, "a", 64, DatasetLayout(label_suffix=".npy"))
        assert v.labels.tolist() == [0, 1, 0]

    def test_missing_labels_in_eval_mode(self, tmp_path):
        self._write(tmp_path, "a", 3)
        load_dataset(tmp_path)
        with pytest.raises(FileNotFoundError):
            load_dataset(tmp_path, eval_mode=True)

    def test_label_length_mismatch(self, tmp_path):
        self._write(tmp_path, "a", 3, labels=[0, 1])
        with pytest.raises(ValueError, match="label length"):
            load_dataset(tmp_path)

    def test_resolution_must_divide_by_eight(self, tmp_path):
        self._write(tmp_path, "a", 3)
        with pytest.raises(ValueError):
            load_video(tmp_path, "a", 60)
