from .beats import beat_align, extract_beats, kinematic_beat_frames, kinematic_speed, onset_beat_frames
from .embedder import PoseEmbedder
from .fgd import GaussianStats, fgd, gaussian_stats
from .keypoints import srgr

__all__ = [
    "GaussianStats",
    "PoseEmbedder",
    "beat_align",
    "extract_beats",
    "fgd",
    "gaussian_stats",
    "kinematic_beat_frames",
    "kinematic_speed",
    "onset_beat_frames",
    "srgr",
]
