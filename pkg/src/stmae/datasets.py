"""Synthetic surveillance scenes, frame-directory loading and clip sampling.

Videos live on disk as ``<root>/frames/<video_id>/000000.png ...`` with an
optional ``<root>/labels/<video_id>.txt`` holding one 0/1 label per frame.
All frames are returned as float32 arrays of shape (H, W, 3) in [0, 1].
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import cv2
import numpy as np

logger = logging.getLogger(__name__)

SHAPES = ("square", "circle", "triangle", "cross", "diamond")
ANOMALY_TYPES = ("speed-up", "teleport", "unseen-shape")


@dataclass
class Sprite:
    shape: str = "square"
    size: int = 8
    intensity: float = 0.9
    position: tuple[float, float] = (10.0, 10.0)  # (x, y) of the top-left corner
    velocity: tuple[float, float] = (2.0, 0.0)  # px/frame

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown sprite shape {self.shape!r}")
        self.position = tuple(float(v) for v in self.position)
        self.velocity = tuple(float(v) for v in self.velocity)


@dataclass
class AnomalyScript:
    """Anomalous behaviour of one sprite on frames ``onset..offset`` (inclusive)."""

    sprite: int
    onset: int
    offset: int
    type: str = "speed-up"
    factor: float = 4.0  # speed-up multiplier
    shape: str = "cross"  # replacement shape for unseen-shape
    intensity: float | None = None
    size: int | None = None  # replacement size for unseen-shape

    def __post_init__(self):
        if self.type not in ANOMALY_TYPES:
            raise ValueError(f"unknown anomaly type {self.type!r}")
        if self.offset < self.onset:
            raise ValueError("anomaly offset precedes onset")

    def covers(self, t: int) -> bool:
        return self.onset <= t <= self.offset


@dataclass
class SyntheticScene:
    sprites: list[Sprite] = field(default_factory=list)
    anomalies: list[AnomalyScript] = field(default_factory=list)
    background_seed: int = 0
    resolution: int = 64
    background_contrast: float = 0.25

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticScene":
        d = dict(d)
        d["sprites"] = [Sprite(**s) for s in d.get("sprites", [])]
        d["anomalies"] = [AnomalyScript(**a) for a in d.get("anomalies", [])]
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    def labels(self, num_frames: int) -> np.ndarray:
        lab = np.zeros(num_frames, dtype=np.uint8)
        for a in self.anomalies:
            lab[max(a.onset, 0) : min(a.offset, num_frames - 1) + 1] = 1
        return lab


@dataclass
class Video:
    video_id: str
    frames: np.ndarray  # (T, H, W, 3) float32 in [0, 1]
    labels: np.ndarray | None = None
    source_resolution: tuple[int, int] | None = None

    def __len__(self) -> int:
        return len(self.frames)


@dataclass
class VideoClip:
    video_id: str
    frames: np.ndarray  # (k_in + 1, H, W, 3); the last frame is the prediction target
    indices: np.ndarray
    labels: np.ndarray | None = None

    @property
    def inputs(self) -> np.ndarray:
        return self.frames[:-1]

    @property
    def target(self) -> np.ndarray:
        return self.frames[-1]

    @property
    def target_index(self) -> int:
        return int(self.indices[-1])


@dataclass
class DatasetLayout:
    """Where frames and labels live under a dataset root."""

    frames_dir: str = "frames"
    labels_dir: str = "labels"
    frame_glob: str = "*.png"
    label_suffix: str = ".txt"


# ---------------------------------------------------------------------------
# synthetic scenes


def _background(res: int, seed: int, contrast: float) -> np.ndarray:
    rng = np.random.default_rng(seed)
    coarse = rng.random((4, 4)).astype(np.float32)
    smooth = cv2.resize(coarse, (res, res), interpolation=cv2.INTER_CUBIC)
    smooth = (smooth - smooth.min()) / max(float(np.ptp(smooth)), 1e-6)
    return (0.2 + contrast * smooth).astype(np.float32)


def _shape_mask(shape: str, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32) + 0.5
    c = size / 2.0
    if shape == "square":
        m = np.ones((size, size), bool)
    elif shape == "circle":
        m = (xx - c) ** 2 + (yy - c) ** 2 <= c**2
    elif shape == "triangle":
        m = np.abs(xx - c) <= yy / 2.0
    elif shape == "diamond":
        m = np.abs(xx - c) + np.abs(yy - c) <= c
    else:  # cross
        w = max(size // 4, 1)
        m = (np.abs(xx - c) <= w) | (np.abs(yy - c) <= w)
    return m


def _paste(canvas: np.ndarray, mask: np.ndarray, x: float, y: float, value: float) -> None:
    # positions wrap around the canvas edges
    res = canvas.shape[0]
    ys, xs = np.nonzero(mask)
    canvas[(ys + int(round(y))) % res, (xs + int(round(x))) % res] = value


def render_scene(scene: SyntheticScene, num_frames: int, seed: int) -> np.ndarray:
    """Render ``num_frames`` grayscale frames (T, H, W) in [0, 1]."""
    rng = np.random.default_rng(seed)
    res = scene.resolution
    bg = _background(res, scene.background_seed, scene.background_contrast)
    pos = np.array([s.position for s in scene.sprites], dtype=np.float64).reshape(-1, 2)
    frames = np.empty((num_frames, res, res), dtype=np.float32)
    for t in range(num_frames):
        active = [a for a in scene.anomalies if a.covers(t)]
        canvas = bg.copy()
        for i, sp in enumerate(scene.sprites):
            mine = [a for a in active if a.sprite == i]
            v = np.array(sp.velocity)
            for a in mine:
                if a.type == "speed-up":
                    v = v * a.factor
            if t > 0:
                pos[i] = (pos[i] + v) % res
            for a in mine:
                if a.type == "teleport":
                    pos[i] = rng.uniform(0, res, size=2)
            shape, value, size = sp.shape, sp.intensity, sp.size
            for a in mine:
                if a.type == "unseen-shape":
                    shape = a.shape
                    value = sp.intensity if a.intensity is None else a.intensity
                    size = sp.size if a.size is None else a.size
            _paste(canvas, _shape_mask(shape, size), pos[i, 0], pos[i, 1], value)
        frames[t] = canvas
    return np.clip(frames, 0.0, 1.0)


def generate_synthetic(
    scene: SyntheticScene,
    num_frames: int,
    seed: int,
    out_root: str | Path,
    video_id: str,
    k_in: int = 4,
) -> Path:
    """Write a synthetic video and its label file under ``out_root``.

    Sprites leaving the canvas wrap around to the opposite edge.
    """
    if num_frames < k_in + 1:
        raise ValueError(f"num_frames={num_frames} must be >= k_in + 1 = {k_in + 1}")
    layout = DatasetLayout()
    out_root = Path(out_root)
    vdir = out_root / layout.frames_dir / video_id
    vdir.mkdir(parents=True, exist_ok=True)
    frames = render_scene(scene, num_frames, seed)
    for t, f in enumerate(frames):
        cv2.imwrite(str(vdir / f"{t:06d}.png"), np.round(f * 255).astype(np.uint8))
    ldir = out_root / layout.labels_dir
    ldir.mkdir(parents=True, exist_ok=True)
    np.savetxt(ldir / f"{video_id}.txt", scene.labels(num_frames), fmt="%d")
    (out_root / "scenes").mkdir(exist_ok=True)
    with open(out_root / "scenes" / f"{video_id}.json", "w") as fh:
        json.dump({"scene": scene.to_dict(), "num_frames": num_frames, "seed": seed}, fh, indent=2)
    return vdir


def synthesize_benchmark(spec: dict, out_root: str | Path, k_in: int = 4) -> list[str]:
    """Generate every video listed in a benchmark document.

    ``spec`` holds ``{"videos": [{"id", "num_frames", "seed", "scene": {...}}]}``.
    """
    ids = []
    for entry in spec["videos"]:
        scene = SyntheticScene.from_dict(entry["scene"])
        generate_synthetic(scene, entry["num_frames"], entry["seed"], out_root, entry["id"], k_in=k_in)
        ids.append(entry["id"])
    return ids


# ---------------------------------------------------------------------------
# noise


def add_salt_pepper(frame_stack, fraction: float, seed: int):
    """Corrupt exactly ``round(fraction * P)`` of the P pixel positions.

    A pixel position is one spatial location in one frame; all channels at a
    corrupted position are set together. The first half (rounded down) of the
    chosen positions become pepper (0), the rest salt (1). Works on numpy
    arrays or torch tensors shaped (..., H, W, ch) for numpy and
    (..., ch, H, W) for torch. The input is never modified.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    is_torch = not isinstance(frame_stack, np.ndarray)
    if is_torch:
        import torch

        out = frame_stack.clone()
        # channel axis is -3; collapse it for position indexing
        view = out.movedim(-3, -1)
        pos_shape = view.shape[:-1]
    else:
        out = frame_stack.copy()
        if out.ndim == 2:
            view = out[..., None]
        else:
            view = out
        pos_shape = view.shape[:-1]
    total = int(np.prod(pos_shape))
    n = int(round(fraction * total))
    if n == 0:
        return out
    chosen = rng.choice(total, size=n, replace=False)
    flat_idx = np.unravel_index(chosen, pos_shape)
    half = n // 2
    pepper = tuple(ix[:half] for ix in flat_idx)
    salt = tuple(ix[half:] for ix in flat_idx)
    if is_torch:
        pepper = tuple(torch.as_tensor(ix) for ix in pepper)
        salt = tuple(torch.as_tensor(ix) for ix in salt)
    view[pepper] = 0
    view[salt] = 1
    return out


# ---------------------------------------------------------------------------
# loading and clips


def _read_frame(path: Path, resolution: int) -> tuple[np.ndarray, tuple[int, int]]:
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise OSError(f"cannot read frame {path}")
    src = img.shape[:2]
    if img.dtype == np.uint16:
        img = (img / 65535.0).astype(np.float32)
    else:
        img = img.astype(np.float32) / 255.0
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=2)
    elif img.shape[2] == 4:
        img = img[..., :3]
    if img.shape[2] == 3:
        img = img[..., ::-1]  # BGR -> RGB
    if img.shape[:2] != (resolution, resolution):
        img = cv2.resize(img, (resolution, resolution), interpolation=cv2.INTER_AREA)
    return np.ascontiguousarray(np.clip(img, 0.0, 1.0), dtype=np.float32), src


def _read_labels(path: Path) -> np.ndarray:
    if path.suffix == ".npy":
        lab = np.load(path)
    else:
        lab = np.loadtxt(path, dtype=np.int64, ndmin=1)
    lab = np.asarray(lab).reshape(-1)
    if not np.isin(lab, (0, 1)).all():
        raise ValueError(f"labels in {path} must be 0/1")
    return lab.astype(np.uint8)


def load_video(
    root: str | Path,
    video_id: str,
    resolution: int = 64,
    layout: DatasetLayout | None = None,
    require_labels: bool = False,
    downsample: int = 8,
) -> Video:
    layout = layout or DatasetLayout()
    if resolution % downsample:
        raise ValueError(f"resolution {resolution} not divisible by {downsample}")
    root = Path(root)
    paths = sorted((root / layout.frames_dir / video_id).glob(layout.frame_glob))
    if not paths:
        raise FileNotFoundError(f"no frames for video {video_id!r} under {root}")
    frames, src = [], None
    for p in paths:
        f, src = _read_frame(p, resolution)
        frames.append(f)
    labels = None
    lpath = root / layout.labels_dir / f"{video_id}{layout.label_suffix}"
    if lpath.exists():
        labels = _read_labels(lpath)
        if len(labels) != len(frames):
            raise ValueError(
                f"label length {len(labels)} does not match {len(frames)} frames for {video_id!r}"
            )
    elif require_labels:
        raise FileNotFoundError(f"missing label file {lpath}")
    return Video(video_id, np.stack(frames), labels, src)


def load_dataset(
    root: str | Path,
    layout: DatasetLayout | None = None,
    resolution: int = 64,
    eval_mode: bool = False,
    video_ids: Sequence[str] | None = None,
) -> list[Video]:
    """Load every video under ``root``; labels are mandatory when ``eval_mode``."""
    layout = layout or DatasetLayout()
    fdir = Path(root) / layout.frames_dir
    if video_ids is None:
        if not fdir.is_dir():
            raise FileNotFoundError(f"no frames directory at {fdir}")
        video_ids = sorted(p.name for p in fdir.iterdir() if p.is_dir())
    return [load_video(root, v, resolution, layout, require_labels=eval_mode) for v in video_ids]


def sample_clips(video: Video, k_in: int = 4, stride: int = 1) -> Iterator[VideoClip]:
    """Yield clips of ``k_in`` inputs plus one target, stepping by ``stride``.

    With stride 1 every frame ``t >= k_in`` is the target of exactly one clip.
    """
    T = len(video)
    if T < k_in + 1:
        raise ValueError(f"video {video.video_id!r} has {T} frames, needs at least {k_in + 1}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    for start in range(0, T - k_in, stride):
        idx = np.arange(start, start + k_in + 1)
        labels = None if video.labels is None else video.labels[idx]
        yield VideoClip(video.video_id, video.frames[idx], idx, labels)


def make_benchmark(
    seed: int = 0,
    n_train: int = 12,
    n_test: int = 6,
    train_frames: int = 20,
    test_frames: int = 64,
    sprites_per_video: int = 2,
    resolution: int = 64,
    background_seed: int = 3,
    anomaly_span: tuple[int, int] = (24, 39),
    speeds: Sequence[float] = (1.0,),
    intensities: Sequence[float] = (0.9, 1.0),
    sizes: tuple[int, int] = (8, 10),
) -> dict:
    """Build a benchmark document for :func:`synthesize_benchmark`.

    Every video shares one static background (a fixed camera). Normal sprites
    are bright squares, circles or triangles drifting at ``speeds`` px/frame.
    Many short training videos give the model varied sprite placements. Each
    test video carries one scripted anomaly on ``anomaly_span``; types cycle
    through speed-up, teleport and unseen-shape (a larger cross).
    """
    rng = np.random.default_rng(seed)
    directions = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, 1)]

    def scene(anomalies=()):
        sprites = []
        for _ in range(sprites_per_video):
            d = directions[rng.integers(len(directions))]
            speed = float(rng.choice(list(speeds)))
            sprites.append({
                "shape": str(rng.choice(["square", "circle", "triangle"])),
                "size": int(rng.integers(sizes[0], sizes[1] + 1)),
                "intensity": float(rng.choice(list(intensities))),
                "position": [float(rng.integers(0, resolution)), float(rng.integers(0, resolution))],
                "velocity": [speed * d[0], speed * d[1]],
            })
        return {"sprites": sprites, "anomalies": list(anomalies), "background_seed": background_seed,
                "resolution": resolution}

    train = [{"id": f"train_{i:02d}", "num_frames": train_frames, "seed": seed * 1000 + i, "scene": scene()}
             for i in range(n_train)]
    kinds = [
        {"type": "speed-up", "factor": 4.0},
        {"type": "teleport"},
        {"type": "unseen-shape", "shape": "cross", "intensity": 1.0, "size": 16},
        {"type": "speed-up", "factor": 3.0},
    ]
    test = []
    for i in range(n_test):
        a = {"sprite": 0, "onset": anomaly_span[0], "offset": anomaly_span[1], **kinds[i % len(kinds)]}
        test.append({"id": f"test_{i:02d}", "num_frames": test_frames, "seed": seed * 1000 + 500 + i,
                     "scene": scene([a])})
    return {"train": {"videos": train}, "test": {"videos": test}}
