"""
Synthetic surveillance scenes
=============================

A fixed camera watches bright sprites drift over a textured background.
Test videos carry one scripted anomaly each; labels mark the frames it covers.
"""

import tempfile
from pathlib import Path

import numpy as np

from stmae.datasets import (
    AnomalyScript,
    DatasetLayout,
    Sprite,
    SyntheticScene,
    add_salt_pepper,
    generate_synthetic,
    load_dataset,
    make_benchmark,
    render_scene,
    sample_clips,
)

# A scene is a list of sprites plus an anomaly script. Positions wrap around
# the canvas, so sprites never leave the frame.
scene = SyntheticScene(
    sprites=[
        Sprite("square", 9, 1.0, (10.0, 20.0), (1.0, 0.0)),
        Sprite("circle", 8, 0.9, (40.0, 40.0), (0.0, -1.0)),
    ],
    anomalies=[AnomalyScript(sprite=0, onset=12, offset=19, type="speed-up", factor=4.0)],
    background_seed=3,
    resolution=64,
)
frames = render_scene(scene, num_frames=32, seed=0)
print("frames", frames.shape, "range", frames.min().round(3), frames.max().round(3))
print("labels", "".join(map(str, scene.labels(32))))

# Writing a scene gives a frame directory and a label file, the same layout
# the loader expects from real datasets.
root = Path(tempfile.mkdtemp())
generate_synthetic(scene, 32, seed=0, out_root=root, video_id="demo")
(video,) = load_dataset(root, DatasetLayout(), resolution=64, eval_mode=True)
print(video.video_id, video.frames.shape, "anomalous frames:", int(video.labels.sum()))

# Clips are k_in past frames plus the frame to predict.
clips = list(sample_clips(video, k_in=4))
print(len(clips), "clips; first predicts frame", clips[0].indices[-1], "from", clips[0].indices[:-1])

# The appearance stream is trained to remove salt-and-pepper noise.
noisy = add_salt_pepper(video.frames[:4], 0.2, seed=0)
changed = (noisy != video.frames[:4]).any(axis=-1).mean()
print(f"salt-and-pepper touched {changed:.1%} of pixel positions")

# The committed benchmark is a document built by make_benchmark.
bench = make_benchmark(seed=0)
kinds = [v["scene"]["anomalies"][0]["type"] for v in bench["test"]["videos"]]
print(len(bench["train"]["videos"]), "training videos; test anomalies:", kinds)
