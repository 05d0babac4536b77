"""Synthetic speech/gesture sequences with planted, checkable structure.

* Audio channel 0 is an onset channel: an impulse of strength ``a_i`` at each
  beat frame ``b_i``. The remaining channels are band energies following a
  smooth beat envelope plus a constant per-emotion and per-speaker spectral
  signature (what the emotion/speaker classifier can pick up).
* Blendshapes are a low-passed copy of the audio envelope, so the face is
  predictable from audio.
* Poses pass through a keypose at every beat and ease between keyposes with
  a half-cosine, so joint velocity is minimal exactly on beat frames. Keyposes
  alternate around a per-(emotion, speaker) offset with amplitude ``a_i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataio import BODY_DIM, HAND_DIM, N_EMOTIONS, POSE_DIM, SequenceRecord


@dataclass
class SyntheticConfig:
    n_sequences: int = 8
    frames_per_sequence: int = 240
    rng_seed: int = 0
    # style tables (signatures, offsets, stroke directions) come from their own
    # seed so train/test sets drawn with different rng_seed share one "world"
    style_seed: int = 1234
    n_speakers: int = 4
    frame_rate: float = 15.0
    audio_dim: int = 16
    text_dim: int = 8
    face_dim: int = 51
    beat_period: tuple[int, int] = (6, 10)
    speaker_offset: float = 25.0
    emotion_offset: float = 10.0
    stroke_amplitude: float = 15.0
    audio_style: float = 1.0
    audio_noise: float = 0.02
    face_noise: float = 0.0
    pose_noise: float = 0.0
    emotions: tuple[int, ...] | None = None
    speakers: tuple[int, ...] | None = None
    # cycle through label pairs so small sets still cover every emotion and
    # speaker; False draws each sequence's labels independently and uniformly
    balanced_labels: bool = True

    def validate(self) -> "SyntheticConfig":
        lo, hi = self.beat_period
        checks = [
            (self.n_sequences >= 1, "n_sequences must be >= 1"),
            (self.frames_per_sequence >= 3, "frames_per_sequence must be >= 3"),
            (self.n_speakers >= 1, "n_speakers must be >= 1"),
            (self.frame_rate > 0, "frame_rate must be positive"),
            (self.audio_dim >= 2, "audio_dim must be >= 2 (onset channel + bands)"),
            (self.text_dim >= 1 and self.face_dim >= 1, "text_dim and face_dim must be >= 1"),
            (4 <= lo <= hi, "beat_period must satisfy 4 <= lo <= hi"),
            (min(self.speaker_offset, self.emotion_offset, self.stroke_amplitude) >= 0, "offsets must be >= 0"),
            (min(self.audio_style, self.audio_noise, self.face_noise, self.pose_noise) >= 0, "noise levels must be >= 0"),
            (all(0 <= e < N_EMOTIONS for e in self.emotions or ()), "emotions must lie in 0..7"),
            (all(0 <= s < self.n_speakers for s in self.speakers or ()), "speakers must lie in 0..n_speakers-1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(f"SyntheticConfig: {msg}")
        return self


def _orthogonal_rows(rng, n_rows, dim, magnitude):
    if n_rows <= dim:
        q, _ = np.linalg.qr(rng.normal(size=(dim, n_rows)))
        rows = q.T
    else:
        rows = rng.normal(size=(n_rows, dim))
        rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    return magnitude * rows


@dataclass
class StyleTables:
    emo_audio: np.ndarray
    spk_audio: np.ndarray
    band_gain: np.ndarray
    face_base: np.ndarray
    face_gain: np.ndarray
    base_pose: np.ndarray
    offsets: np.ndarray  # (8, S, 141)
    stroke_dir: np.ndarray  # (S, 141)
    emo_scale: np.ndarray  # (8,)


def style_tables(cfg: SyntheticConfig) -> StyleTables:
    rng = np.random.default_rng(cfg.style_seed)
    n_bands, s = cfg.audio_dim - 1, cfg.n_speakers
    emo_audio = cfg.audio_style * rng.normal(size=(N_EMOTIONS, n_bands))
    spk_audio = cfg.audio_style * rng.normal(size=(s, n_bands))
    band_gain = rng.uniform(0.5, 1.5, size=n_bands)
    face_base = rng.uniform(0.05, 0.3, size=cfg.face_dim)
    face_gain = rng.uniform(0.1, 0.5, size=cfg.face_dim)
    base_pose = rng.uniform(-30.0, 30.0, size=POSE_DIM)
    spk = np.concatenate(
        [_orthogonal_rows(rng, s, BODY_DIM, cfg.speaker_offset), _orthogonal_rows(rng, s, HAND_DIM, cfg.speaker_offset)],
        axis=1,
    )
    emo = np.concatenate(
        [_orthogonal_rows(rng, N_EMOTIONS, BODY_DIM, cfg.emotion_offset), _orthogonal_rows(rng, N_EMOTIONS, HAND_DIM, cfg.emotion_offset)],
        axis=1,
    )
    offsets = emo[:, None, :] + spk[None, :, :]
    stroke_dir = cfg.stroke_amplitude * rng.normal(size=(s, POSE_DIM))
    emo_scale = rng.uniform(0.6, 1.4, size=N_EMOTIONS)
    return StyleTables(emo_audio, spk_audio, band_gain, face_base, face_gain, base_pose, offsets, stroke_dir, emo_scale)


def _beat_grid(rng, t_len, lo, hi):
    """Beat frames covering [-hi, t_len + hi] so motion never stalls at the edges."""
    beats = [-int(rng.integers(1, hi + 1))]
    while beats[-1] < t_len + hi:
        beats.append(beats[-1] + int(rng.integers(lo, hi + 1)))
    return np.array(beats)


def _ease(keys, beats, t_len):
    """Half-cosine interpolation through ``keys[i]`` at frame ``beats[i]``."""
    t = np.arange(t_len)
    seg = np.searchsorted(beats, t, side="right") - 1
    b0, b1 = beats[seg], beats[seg + 1]
    s = (t - b0) / (b1 - b0)
    w = (0.5 - 0.5 * np.cos(np.pi * s))[:, None]
    return (1.0 - w) * keys[seg] + w * keys[seg + 1]


def label_schedule(cfg: SyntheticConfig, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Balanced (emotion, speaker) labels: every emotion and speaker recurs as evenly as the count allows.

    Speakers shift by one each time the joint emotion/speaker cycle wraps, so an emotion is
    not tied to a single speaker once there are more sequences than emotions.
    """
    emos = np.array(cfg.emotions or range(N_EMOTIONS))[rng.permutation(len(cfg.emotions or range(N_EMOTIONS)))]
    spks = np.array(cfg.speakers or range(cfg.n_speakers))[rng.permutation(len(cfg.speakers or range(cfg.n_speakers)))]
    period = math.lcm(len(emos), len(spks))
    return [(int(emos[i % len(emos)]), int(spks[(i + i // period) % len(spks)])) for i in range(cfg.n_sequences)]


def generate_sequence(cfg: SyntheticConfig, tables: StyleTables, rng: np.random.Generator, index: int = 0,
                      labels: tuple[int, int] | None = None) -> SequenceRecord:
    t_len = cfg.frames_per_sequence
    if labels is None:
        labels = (int(rng.choice(cfg.emotions or range(N_EMOTIONS))), int(rng.choice(cfg.speakers or range(cfg.n_speakers))))
    emotion, speaker = labels
    beats = _beat_grid(rng, t_len, *cfg.beat_period)
    strength = rng.uniform(0.6, 1.0, size=len(beats))
    inside = (beats >= 0) & (beats < t_len)

    t = np.arange(t_len)
    onset = np.zeros(t_len)
    onset[beats[inside]] = strength[inside]
    envelope = (strength[None, :] * np.exp(-((t[:, None] - beats[None, :]) ** 2) / (2 * 1.5**2))).sum(axis=1)
    bands = envelope[:, None] * tables.band_gain + tables.emo_audio[emotion] + tables.spk_audio[speaker]
    audio = np.concatenate([onset[:, None], bands], axis=1)
    audio += cfg.audio_noise * rng.normal(size=audio.shape)

    smooth = np.zeros(t_len)
    acc = envelope[0]
    for i in range(t_len):
        acc = 0.6 * acc + 0.4 * envelope[i]
        smooth[i] = acc
    face = tables.face_base + tables.face_gain * smooth[:, None]
    face = np.clip(face + cfg.face_noise * rng.normal(size=face.shape), 0.0, 1.0)

    text = np.zeros((t_len, cfg.text_dim))
    pos = 0
    while pos < t_len:
        n = int(rng.integers(2, 6))
        text[pos : pos + n] = rng.normal(size=cfg.text_dim)
        pos += n

    sign = np.where(np.arange(len(beats)) % 2 == 0, 1.0, -1.0)
    centre = tables.base_pose + tables.offsets[emotion, speaker]
    keys = centre + (sign * strength * tables.emo_scale[emotion])[:, None] * tables.stroke_dir[speaker]
    pose = _ease(keys, beats, t_len)
    pose = np.clip(pose + cfg.pose_noise * rng.normal(size=pose.shape), -180.0, 180.0)

    weights = np.ones(t_len)
    weights[beats[inside]] = 2.0
    weights /= weights.mean()

    return SequenceRecord(
        audio=audio,
        text=text,
        face=face,
        body=pose[:, :BODY_DIM],
        hands=pose[:, BODY_DIM:],
        emotion=emotion,
        speaker=speaker,
        frame_rate=cfg.frame_rate,
        weights=weights,
        beats=beats[inside],
        name=f"syn{cfg.rng_seed}_{index:04d}",
    )


def gen_synthetic(cfg: SyntheticConfig) -> list[SequenceRecord]:
    cfg.validate()
    tables = style_tables(cfg)
    rng = np.random.default_rng(cfg.rng_seed)
    labels = label_schedule(cfg, rng) if cfg.balanced_labels else [None] * cfg.n_sequences
    return [generate_sequence(cfg, tables, rng, i, labels[i]).validate(cfg.n_speakers) for i in range(cfg.n_sequences)]
