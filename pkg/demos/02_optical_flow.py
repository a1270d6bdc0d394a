"""
Optical flow providers
======================

The motion stream consumes dense flow between consecutive frames. Farneback
flow (OpenCV) feeds the motion encoder; a differentiable temporal-difference
proxy supplies gradients for the motion loss.
"""

import tempfile
from pathlib import Path

import numpy as np
import torch

from stmae.datasets import Video
from stmae.flow import DifferenceFlow, FarnebackFlow, cache_flows

# A textured square moves 3 px to the right.
rng = np.random.default_rng(0)
a = np.full((64, 64), 0.2, np.float32)
a[20:36, 20:36] = 0.6 + 0.4 * rng.random((16, 16))
b = np.roll(a, 3, axis=1)
pair = np.stack([a, b])[..., None].repeat(3, axis=-1)

flow = FarnebackFlow().clip_flow(pair)
support = np.zeros((64, 64), bool)
support[22:34, 25:37] = True
print("Farneback mean flow over the square:", flow[support].mean(axis=0).round(2))

# The proxy is a channel-mean frame difference, duplicated into two channels.
proxy = DifferenceFlow()
clip = torch.tensor(pair).permute(0, 3, 1, 2)[None].requires_grad_(True)
out = proxy.clip_flow(clip)
out.sum().backward()
print("proxy output", tuple(out.shape), "differentiable:", clip.grad is not None)

# Flow is computed once per video and cached as float32 .npy with a sidecar.
video = Video("moving_square", pair.astype(np.float32))
cache = tempfile.mkdtemp()
flows = cache_flows(video, FarnebackFlow(), cache)
print("cached", sorted(p.name for p in Path(cache).iterdir()), flows.shape)
assert np.array_equal(cache_flows(video, FarnebackFlow(), cache), flows)  # second call reads the cache
