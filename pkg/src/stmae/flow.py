"""Optical-flow providers used for the motion stream and the motion loss.

Two providers ship with the package:

* ``FarnebackFlow`` -- classical dense polynomial-expansion flow (OpenCV).
  Not differentiable; used for the motion autoencoder's inputs/targets.
* ``DifferenceFlow`` -- channel-mean temporal difference duplicated into two
  channels. Crude, but differentiable end to end, which the motion loss needs.

``pairwise_flow(a, b)`` follows OpenCV's convention: content at ``p`` in ``a``
moves to ``p + flow(p)`` in ``b``.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import cv2
import numpy as np
import torch
from filelock import FileLock

logger = logging.getLogger(__name__)


class FlowProvider:
    name: str = "base"
    differentiable: bool = False

    def pairwise_flow(self, frame_a, frame_b):
        raise NotImplementedError

    def clip_flow(self, frames):
        """Stack flows of consecutive pairs along the channel axis.

        numpy input ``(k, H, W, 3)`` gives ``(H, W, 2(k-1))``; torch input
        ``(B, k, 3, H, W)`` gives ``(B, 2(k-1), H, W)``.
        """
        is_np = isinstance(frames, np.ndarray)
        if (len(frames) if is_np else frames.shape[1]) < 2:
            raise ValueError("clip_flow needs at least two frames")
        if is_np:
            return np.concatenate(
                [self.pairwise_flow(frames[i], frames[i + 1]) for i in range(len(frames) - 1)], axis=-1
            )
        k = frames.shape[1]
        return torch.cat([self.pairwise_flow(frames[:, i], frames[:, i + 1]) for i in range(k - 1)], dim=1)

    def __repr__(self):
        return f"{type(self).__name__}(name={self.name!r}, differentiable={self.differentiable})"


def _check_shapes(a, b):
    if tuple(a.shape) != tuple(b.shape):
        raise ValueError(f"frame shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")


class DifferenceFlow(FlowProvider):
    """``mean_c(a - b)`` copied into both flow channels."""

    name = "difference"
    differentiable = True

    def pairwise_flow(self, frame_a, frame_b):
        _check_shapes(frame_a, frame_b)
        if isinstance(frame_a, np.ndarray):
            d = (frame_a - frame_b).mean(axis=-1, keepdims=True) if frame_a.ndim == 3 else (frame_a - frame_b)[..., None]
            return np.concatenate([d, d], axis=-1).astype(np.float32)
        # torch layout (..., C, H, W)
        d = (frame_a - frame_b).mean(dim=-3, keepdim=True)
        return torch.cat([d, d], dim=-3)


def _to_gray_u8(frame: np.ndarray) -> np.ndarray:
    f = np.asarray(frame, dtype=np.float32)
    if f.ndim == 3:
        f = f.mean(axis=-1)
    return np.clip(np.round(f * 255.0), 0, 255).astype(np.uint8)


class FarnebackFlow(FlowProvider):
    """Dense flow via OpenCV's polynomial-expansion algorithm."""

    name = "farneback"
    differentiable = False

    def __init__(self, pyr_scale=0.5, levels=3, winsize=9, iterations=5, poly_n=5, poly_sigma=1.1):
        self.params = dict(
            pyr_scale=pyr_scale, levels=levels, winsize=winsize,
            iterations=iterations, poly_n=poly_n, poly_sigma=poly_sigma, flags=0,
        )

    def _flow_np(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        ga, gb = _to_gray_u8(a), _to_gray_u8(b)
        if np.array_equal(ga, gb):
            return np.zeros(ga.shape + (2,), np.float32)
        return cv2.calcOpticalFlowFarneback(ga, gb, None, **self.params).astype(np.float32)

    def pairwise_flow(self, frame_a, frame_b):
        _check_shapes(frame_a, frame_b)
        if isinstance(frame_a, np.ndarray):
            return self._flow_np(frame_a, frame_b)
        # torch batch (B, 3, H, W) -> (B, 2, H, W); no gradient path
        a = frame_a.detach().cpu().movedim(-3, -1).numpy()
        b = frame_b.detach().cpu().movedim(-3, -1).numpy()
        if a.ndim == 3:
            return torch.from_numpy(self._flow_np(a, b)).movedim(-1, -3)
        out = np.stack([self._flow_np(x, y) for x, y in zip(a, b)])
        return torch.from_numpy(out).movedim(-1, -3).to(frame_a.device)


PROVIDERS = {"difference": DifferenceFlow, "proxy": DifferenceFlow, "farneback": FarnebackFlow}


def get_provider(name: str) -> FlowProvider:
    try:
        return PROVIDERS[name]()
    except KeyError:
        raise ValueError(f"unknown flow provider {name!r}; choose from {sorted(PROVIDERS)}") from None


def video_flows(frames: np.ndarray, provider: FlowProvider) -> np.ndarray:
    """Flows between consecutive frames, shape (T-1, H, W, 2)."""
    return np.stack([provider.pairwise_flow(frames[t], frames[t + 1]) for t in range(len(frames) - 1)])


def cache_flows(video, provider: FlowProvider, cache_dir: str | Path) -> np.ndarray:
    """Return consecutive flows for ``video``, computing them once per key.

    Archive: ``<cache_dir>/<video_id>__<provider>__<res>.npy`` (little-endian
    float32, shape (T-1, H, W, 2)) with a ``.json`` sidecar.
    """
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    res = video.frames.shape[1]
    stem = f"{video.video_id}__{provider.name}__{res}"
    arr_path, meta_path = cache_dir / f"{stem}.npy", cache_dir / f"{stem}.json"
    with FileLock(str(cache_dir / f"{stem}.lock")):
        if arr_path.exists() and meta_path.exists():
            flows = np.load(arr_path)
            if flows.shape[0] == len(video) - 1:
                return flows
            logger.warning("stale flow cache for %s, recomputing", stem)
        flows = video_flows(video.frames, provider).astype("<f4")
        np.save(arr_path, flows)
        with open(meta_path, "w") as fh:
            json.dump(
                {"video_id": video.video_id, "provider": provider.name, "resolution": res,
                 "shape": list(flows.shape), "dtype": "<f4"},
                fh, indent=2,
            )
    return flows
