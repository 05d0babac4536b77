"""Beat extraction and the beat alignment score.

Both beat kinds are only reported on frames ``2 .. T-3``: those are the frames
whose kinematic beat test sees a full central-difference neighbourhood, and
keeping audio beats to the same range stops clip edges from counting audio
beats that a gesture beat could never be matched to.
"""

from __future__ import annotations

import numpy as np

EDGE = 2


def _enforce_separation(frames: np.ndarray, strength: np.ndarray, min_sep: int) -> np.ndarray:
    """Greedy non-maximum suppression: keep strongest first, drop neighbours closer than ``min_sep``."""
    kept: list[int] = []
    for i in np.argsort(-strength, kind="stable"):
        f = frames[i]
        if all(abs(f - k) >= min_sep for k in kept):
            kept.append(int(f))
    return np.array(sorted(kept), dtype=int)


def onset_beat_frames(onset: np.ndarray, min_sep: int = 3) -> np.ndarray:
    x = np.asarray(onset, dtype=np.float64)
    if x.ndim != 1 or x.size < 3:
        raise ValueError(f"onset signal must be 1-D with >= 3 frames, got {x.shape}")
    thresh = x.mean() + 0.5 * x.std()
    t = np.arange(EDGE, x.size - EDGE)
    cand = t[(x[t] > x[t - 1]) & (x[t] >= x[t + 1]) & (x[t] > thresh)]
    return _enforce_separation(cand, x[cand], min_sep)


def kinematic_speed(pose: np.ndarray) -> np.ndarray:
    """Mean per-joint angular speed (degrees/frame); ``pose`` is (T, 3J) or (T, J, 3)."""
    p = np.asarray(pose, dtype=np.float64)
    p = p.reshape(p.shape[0], -1, 3)
    return np.linalg.norm(np.gradient(p, axis=0), axis=2).mean(axis=1)


def kinematic_beat_frames(pose: np.ndarray, min_sep: int = 3) -> np.ndarray:
    speed = kinematic_speed(pose)
    if speed.size < 3:
        raise ValueError("need >= 3 frames of motion")
    t = np.arange(EDGE, speed.size - EDGE)
    cand = t[(speed[t] < speed[t - 1]) & (speed[t] <= speed[t + 1]) & (speed[t] < speed.mean())]
    return _enforce_separation(cand, -speed[cand], min_sep)


def extract_beats(signal: np.ndarray, frame_rate: float, kind: str, min_sep: int = 3) -> np.ndarray:
    """Beat times in seconds, strictly increasing.

    ``audio_onset`` takes a 1-D onset channel; ``gesture_kinematic`` takes a
    pose sequence (T, 3J).
    """
    if kind == "audio_onset":
        frames = onset_beat_frames(signal, min_sep)
    elif kind == "gesture_kinematic":
        frames = kinematic_beat_frames(signal, min_sep)
    else:
        raise ValueError(f"unknown beat kind {kind!r}")
    return frames / float(frame_rate)


def beat_align(audio_beats, gesture_beats, sigma: float = 0.2) -> float:
    """Mean over audio beats of ``exp(-d^2 / (2 sigma^2))``, ``d`` = distance to the nearest gesture beat."""
    a = np.asarray(audio_beats, dtype=np.float64)
    g = np.asarray(gesture_beats, dtype=np.float64)
    if a.size == 0:
        raise ValueError("beat_align needs at least one audio beat")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if g.size == 0:
        return 0.0
    d2 = ((a[:, None] - g[None, :]) ** 2).min(axis=1)
    return float(np.mean(np.exp(-d2 / (2.0 * sigma**2))))
