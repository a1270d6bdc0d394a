"""PSNR-based anomaly scores, frame-level ROC AUC and error-map export."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import cv2
import numpy as np
from scipy.stats import rankdata

MSE_FLOOR = 1e-10
PEAK = 255.0


def psnr_error(pred, target) -> float:
    """PSNR in dB of ``pred`` against ``target`` (both in [0, 1]).

    Uses the mean squared error on the 0-255 scale, floored at 1e-10.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    mse = np.mean(((pred - target) * PEAK) ** 2)
    return float(10.0 * np.log10(PEAK**2 / max(mse, MSE_FLOOR)))


def normalize_scores(errors: Sequence[float]) -> np.ndarray:
    """Min-max normalise to [0, 1]; a constant series maps to 0.5 everywhere."""
    e = np.asarray(errors, dtype=np.float64)
    if e.size == 0:
        raise ValueError("need at least one error value")
    lo, hi = e.min(), e.max()
    if hi == lo:
        return np.full_like(e, 0.5)
    return (e - lo) / (hi - lo)


@dataclass
class ScoreSeries:
    video_id: str
    frame_index: np.ndarray
    psnr: np.ndarray
    labels: np.ndarray | None = None
    regularity: np.ndarray = field(init=False)

    def __post_init__(self):
        self.frame_index = np.asarray(self.frame_index, dtype=np.int64)
        self.psnr = np.asarray(self.psnr, dtype=np.float64)
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
        self.regularity = normalize_scores(self.psnr)

    @property
    def anomaly(self) -> np.ndarray:
        return 1.0 - self.regularity

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["frame_index", "e_t", "s_t", "a_t", "label"])
            labels = [""] * len(self.psnr) if self.labels is None else [int(x) for x in self.labels]
            for i, e, s, a, lab in zip(self.frame_index, self.psnr, self.regularity, self.anomaly, labels):
                w.writerow([int(i), repr(float(e)), repr(float(s)), repr(float(a)), lab])

    @classmethod
    def from_csv(cls, path: str | Path, video_id: str | None = None) -> "ScoreSeries":
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        labels = None
        if rows and rows[0]["label"] != "":
            labels = [int(r["label"]) for r in rows]
        return cls(
            video_id or Path(path).stem,
            [int(r["frame_index"]) for r in rows],
            [float(r["e_t"]) for r in rows],
            labels,
        )


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Rank-based ROC AUC (Mann-Whitney U); tied scores count one half."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both normal and anomalous frames")
    ranks = rankdata(s)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def frame_auc(series: Iterable[ScoreSeries], normalization: str = "per-video") -> float:
    """Frame-level AUC of the anomaly score ``1 - s_t`` over all videos.

    ``normalization="global"`` applies min-max once over the concatenated PSNR
    values instead of per video.
    """
    series = list(series)
    if any(s.labels is None for s in series):
        raise ValueError("every score series needs labels")
    labels = np.concatenate([s.labels for s in series])
    if normalization == "per-video":
        scores = np.concatenate([s.anomaly for s in series])
    elif normalization == "global":
        scores = 1.0 - normalize_scores(np.concatenate([s.psnr for s in series]))
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    return roc_auc(scores, labels)


def auc_report(series: Sequence[ScoreSeries], normalization: str = "per-video", **extra) -> dict:
    per_video = {}
    for s in series:
        try:
            per_video[s.video_id] = roc_auc(s.anomaly, s.labels)
        except ValueError:
            per_video[s.video_id] = None  # single-class video
    report = {
        "auc": frame_auc(series, normalization),
        "normalization": normalization,
        "per_video_auc": per_video,
        "frames": {s.video_id: int(len(s.psnr)) for s in series},
        "total_frames": int(sum(len(s.psnr) for s in series)),
        "anomalous_frames": int(sum(int(s.labels.sum()) for s in series)),
    }
    report.update(extra)
    return report


def write_report(report: dict, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)


def _to_u8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.round(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def error_map(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Per-pixel squared error summed over channels, min-max scaled to [0, 1]."""
    pred, target = np.asarray(pred, np.float64), np.asarray(target, np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    err = (pred - target) ** 2
    if err.ndim == 3:
        err = err.sum(axis=-1)
    return normalize_scores(err.ravel()).reshape(err.shape) if np.ptp(err) > 0 else np.zeros_like(err)


def export_error_map(pred: np.ndarray, target: np.ndarray, out_path: str | Path) -> Path:
    """Write the heat map to ``out_path`` plus ``*_pred.png`` / ``*_target.png``.

    Frames are ``(H, W, 3)`` RGB in [0, 1].
    """
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    heat = cv2.applyColorMap(_to_u8(error_map(pred, target)), cv2.COLORMAP_JET)
    cv2.imwrite(str(out_path), heat)
    stem = out_path.with_suffix("")
    cv2.imwrite(f"{stem}_pred.png", _to_u8(pred)[..., ::-1])
    cv2.imwrite(f"{stem}_target.png", _to_u8(target)[..., ::-1])
    return out_path
