"""
Scoring frames and measuring AUC
================================

Prediction quality is measured as PSNR. Per-video min-max normalization gives
a regularity score; its complement is the anomaly score fed to ROC AUC.
"""

import tempfile
from pathlib import Path

import numpy as np

from stmae.scoring import ScoreSeries, auc_report, export_error_map, psnr_error, roc_auc

target = np.zeros((64, 64, 3))
print("uniform error of 16/255:", round(psnr_error(target + 16 / 255, target), 2), "dB")
print("identical frames:", round(psnr_error(target, target), 2), "dB (MSE floored)")

# A toy video: PSNR drops while the anomaly runs.
rng = np.random.default_rng(0)
labels = np.zeros(40, int)
labels[15:25] = 1
psnr = 30 + rng.normal(0, 0.5, 40) - 4 * labels
series = ScoreSeries("toy", range(40), psnr, labels)
print("anomaly score around onset:", series.anomaly[13:17].round(2))
print("frame AUC:", roc_auc(series.anomaly, labels))

report = auc_report([series, ScoreSeries("other", range(40), psnr[::-1], labels[::-1])])
print("pooled AUC", round(report["auc"], 4), "per video", report["per_video_auc"])

# Heat maps of per-pixel error help explain a score.
out = Path(tempfile.mkdtemp())
pred = target.copy()
pred[20:30, 20:30] = 1.0
series.to_csv(out / "toy.csv")
print(export_error_map(pred, target, out / "toy_err.png"), sorted(p.name for p in out.iterdir()))
