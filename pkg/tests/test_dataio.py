import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cogsynth.dataio import (
    BODY_DIM,
    BODY_JOINTS,
    HAND_DIM,
    HAND_JOINTS,
    POSE_COLUMNS,
    DataError,
    GestureSequence,
    SequenceRecord,
    export_sequence,
    import_sequence_csv,
    load_dataset,
    read_bvh_lite,
    read_matrix_csv,
    save_dataset,
    window_clips,
    wrap_degrees,
)


def make_record(t_len=40, seed=0, emotion=1, speaker=0, **over):
    rng = np.random.default_rng(seed)
    fields = dict(
        audio=rng.normal(size=(t_len, 16)),
        text=rng.normal(size=(t_len, 8)),
        face=rng.uniform(size=(t_len, 51)),
        body=rng.uniform(-90, 90, size=(t_len, BODY_DIM)),
        hands=rng.uniform(-90, 90, size=(t_len, HAND_DIM)),
        emotion=emotion,
        speaker=speaker,
        weights=rng.uniform(0.5, 2.0, size=t_len),
        name=f"rec{seed}",
    )
    fields.update(over)
    return SequenceRecord(**fields)


def test_skeleton_dimensions():
    assert len(BODY_JOINTS) == 9 and len(HAND_JOINTS) == 38
    assert BODY_DIM == 27 and HAND_DIM == 114
    assert len(POSE_COLUMNS) == 141 and len(set(POSE_COLUMNS)) == 141


@pytest.mark.parametrize("t_len,expected", [(100, 7), (34, 1), (44, 2), (43, 1)])
def test_window_counts(t_len, expected):
    assert len(window_clips([make_record(t_len)])) == expected


def test_short_record_skipped_with_warning():
    with pytest.warns(UserWarning, match="33 frames"):
        assert window_clips([make_record(33)]) == []


@settings(max_examples=60, deadline=None)
@given(t_len=st.integers(1, 120), n=st.integers(1, 40), stride=st.integers(1, 15))
def test_window_count_formula(t_len, n, stride):
    rec = make_record(t_len)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        clips = window_clips([rec], n, stride, seed_frames=min(4, n))
    expected = (t_len - n) // stride + 1 if t_len >= n else 0
    assert len(clips) == expected
    assert all(c.n_frames == n for c in clips)


def test_clip_contents_and_seed_poses():
    rec = make_record(60)
    clips = window_clips([rec])
    c = clips[1]
    assert c.source == (0, 10)
    np.testing.assert_array_equal(c.audio, rec.audio[10:44])
    assert c.seed_poses.shape == (4, 141)
    np.testing.assert_array_equal(c.seed_poses, np.concatenate([rec.body, rec.hands], 1)[10:14])


def test_window_defaults():
    import inspect

    sig = inspect.signature(window_clips)
    assert (sig.parameters["n"].default, sig.parameters["stride"].default, sig.parameters["seed_frames"].default) == (34, 10, 4)


def test_dataset_round_trip(tmp_path):
    recs = [make_record(40, 0, emotion=2, speaker=1), make_record(50, 1, emotion=7, speaker=0)]
    manifest = save_dataset(recs, tmp_path, n_speakers=2)
    loaded = load_dataset(manifest)
    assert len(loaded) == 2
    for a, b in zip(recs, loaded):
        for f in ("audio", "text", "face", "body", "hands", "weights"):
            np.testing.assert_array_equal(getattr(a, f), getattr(b, f))
        assert (a.emotion, a.speaker) == (b.emotion, b.speaker)


def _rewrite_csv(path, mutate):
    header, values = read_matrix_csv(path)
    values = mutate(values)
    from cogsynth.dataio import write_matrix_csv

    write_matrix_csv(path, header, values)


def test_rejects_blendshape_out_of_range(tmp_path):
    manifest = save_dataset([make_record(40)], tmp_path)
    face = tmp_path / json.loads(manifest.read_text())["sequences"][0]["face_csv"]

    def bump(v):
        v[3, 2] = 1.5
        return v

    _rewrite_csv(face, bump)
    with pytest.raises(DataError, match="field 'face'.*1.5.*frame 3"):
        load_dataset(manifest)


def test_rejects_length_mismatch(tmp_path):
    manifest = save_dataset([make_record(100)], tmp_path)
    audio = tmp_path / json.loads(manifest.read_text())["sequences"][0]["audio_csv"]
    _rewrite_csv(audio, lambda v: v[:99])
    with pytest.raises(DataError, match="lengths differ"):
        load_dataset(manifest)


def test_rejects_bad_label_and_malformed_csv(tmp_path):
    manifest = save_dataset([make_record(40, speaker=3)], tmp_path, n_speakers=2)
    with pytest.raises(DataError, match="speaker label 3"):
        load_dataset(manifest)
    manifest = save_dataset([make_record(40)], tmp_path / "b")
    text = tmp_path / "b" / json.loads(manifest.read_text())["sequences"][0]["text_csv"]
    lines = text.read_text().splitlines()
    lines[5] = "1.0,abc"
    text.write_text("\n".join(lines) + "\n")
    with pytest.raises(DataError, match=r"_text.csv:6"):
        load_dataset(manifest)


def test_record_validate_rejects_angles_and_emotion():
    with pytest.raises(DataError, match="field 'body'"):
        make_record(10, body=np.full((10, 27), 200.0)).validate()
    with pytest.raises(DataError, match="emotion label 9"):
        make_record(10, emotion=9).validate()


def test_csv_export_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    g = GestureSequence(rng.uniform(-180, 180, (30, 27)), rng.uniform(-180, 180, (30, 114)))
    bs = rng.uniform(size=(30, 51))
    path = export_sequence(g, bs, tmp_path / "seq.csv")
    lines = path.read_text().splitlines()
    assert len(lines) == 31
    g2, bs2 = import_sequence_csv(path)
    np.testing.assert_allclose(g2.pose, g.pose, atol=1e-9)
    np.testing.assert_allclose(bs2, bs, atol=1e-9)


def test_bvh_lite_export(tmp_path):
    rng = np.random.default_rng(4)
    g = GestureSequence(rng.uniform(-180, 180, (30, 27)), rng.uniform(-180, 180, (30, 114)))
    path = export_sequence(g, None, tmp_path / "seq.bvh", "bvh-lite")
    text = path.read_text()
    assert text.startswith("HIERARCHY\nROOT Spine")
    assert "Frames: 30" in text
    assert text.count("CHANNELS 3") == 47
    back = read_bvh_lite(path)
    np.testing.assert_allclose(back.pose, g.pose, atol=1e-9)
    assert back.frame_rate == pytest.approx(15.0)


def test_export_rejects_unknown_format(tmp_path):
    g = GestureSequence(np.zeros((2, 27)), np.zeros((2, 114)))
    with pytest.raises(ValueError, match="unknown export format"):
        export_sequence(g, None, tmp_path / "x", "fbx")


def test_wrap_degrees():
    np.testing.assert_allclose(wrap_degrees(np.array([0.0, 190.0, -190.0, 540.0, 179.0])), [0, -170, 170, -180, 179])
