import numpy as np
import pytest

from cogsynth.dataio import window_clips
from cogsynth.metrics import kinematic_beat_frames, onset_beat_frames
from cogsynth.synthetic import SyntheticConfig, gen_synthetic


def test_same_seed_same_data():
    a = gen_synthetic(SyntheticConfig(n_sequences=2, frames_per_sequence=60, rng_seed=5))
    b = gen_synthetic(SyntheticConfig(n_sequences=2, frames_per_sequence=60, rng_seed=5))
    for x, y in zip(a, b):
        for f in ("audio", "text", "face", "body", "hands", "weights"):
            np.testing.assert_array_equal(getattr(x, f), getattr(y, f))
    c = gen_synthetic(SyntheticConfig(n_sequences=2, frames_per_sequence=60, rng_seed=6))
    assert not np.array_equal(a[0].audio, c[0].audio)


def test_streams_valid_and_equal_length():
    cfg = SyntheticConfig(n_sequences=3, frames_per_sequence=90)
    for rec in gen_synthetic(cfg):
        assert rec.audio.shape == (90, 16) and rec.text.shape == (90, 8) and rec.face.shape == (90, 51)
        assert rec.body.shape == (90, 27) and rec.hands.shape == (90, 114)
        assert rec.face.min() >= 0 and rec.face.max() <= 1
        assert np.abs(rec.pose if hasattr(rec, "pose") else rec.body).max() <= 180


def test_onsets_coincide_with_velocity_minima():
    for rec in gen_synthetic(SyntheticConfig(n_sequences=3, frames_per_sequence=150, rng_seed=2)):
        planted = rec.beats[(rec.beats >= 2) & (rec.beats <= rec.n_frames - 3)]
        onsets = onset_beat_frames(rec.audio[:, 0])
        minima = kinematic_beat_frames(np.concatenate([rec.body, rec.hands], 1))
        np.testing.assert_array_equal(onsets, planted)
        for b in planted:
            assert np.min(np.abs(minima - b)) <= 1


def test_speaker_offset_shows_in_mean_pose():
    cfg = SyntheticConfig(n_sequences=2, frames_per_sequence=240, emotions=(0,), speakers=(0, 1), speaker_offset=25.0)
    a, b = gen_synthetic(cfg)
    assert a.speaker != b.speaker
    gap = np.linalg.norm(a.body.mean(0) - b.body.mean(0))
    assert gap >= 25.0


def test_balanced_labels_cover_pairs():
    recs = gen_synthetic(SyntheticConfig(n_sequences=32, frames_per_sequence=10))
    pairs = {(r.emotion, r.speaker) for r in recs}
    assert len(pairs) == 32


def test_uniform_labels_option():
    recs = gen_synthetic(SyntheticConfig(n_sequences=6, frames_per_sequence=10, balanced_labels=False))
    assert all(0 <= r.emotion < 8 and 0 <= r.speaker < 4 for r in recs)


def test_clip_beats_are_relative():
    rec = gen_synthetic(SyntheticConfig(n_sequences=1, frames_per_sequence=60))[0]
    clip = window_clips([rec])[1]
    np.testing.assert_array_equal(clip.beats + 10, rec.beats[(rec.beats >= 10) & (rec.beats < 44)])


def test_bad_config_rejected():
    with pytest.raises(ValueError, match="beat_period"):
        gen_synthetic(SyntheticConfig(beat_period=(2, 3)))
