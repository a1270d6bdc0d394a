"""Two-stream memory-augmented autoencoders for video anomaly detection."""

from .memory import MemoryPool, cosine_similarity, read, separation_loss, write, write_weights
from .scoring import ScoreSeries, frame_auc, normalize_scores, psnr_error

__version__ = "0.1.0"

__all__ = [
    "MemoryPool",
    "ScoreSeries",
    "cosine_similarity",
    "frame_auc",
    "normalize_scores",
    "psnr_error",
    "read",
    "separation_loss",
    "write",
    "write_weights",
]
