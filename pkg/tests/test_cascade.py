import numpy as np
import pytest

from cogsynth.autodiff import ParamStore, Tape, grad_check
from cogsynth.autodiff import ops as F
from cogsynth.cascade import ChannelAttention, CoGModel, GestureAdaLN, ModelConfig, synthesize
from cogsynth.frontend import EmotionSpeakerClassifier

from composite_cases import COMPOSITE_CASES, TINY, end_to_end, smooth_seeds

SMALL = ModelConfig(latent=8, enc_hidden=8, style_dim=8, lstm_hidden=8, mlp_hidden=8)


def bound(model):
    tape = Tape()
    return tape, tape.bind(model.store)


@pytest.fixture(scope="module")
def full_model():
    return CoGModel(ModelConfig(), seed=0)


def test_full_width_shapes(full_model):
    m = full_model
    tape, p = bound(m)
    rng = np.random.default_rng(0)
    face = m.face_generate(p, tape.constant(rng.normal(size=(34, 128))))
    assert face.shape == (34, 51)
    assert m.tffd(p, face).shape == (34, 128)
    e, i = m.labels(p, np.array([3]), np.array([1]), 34)
    assert e.shape == i.shape == (1, 34, 8)
    assert m.style_vector(p, e, i).shape == (1, 34, 64)
    fused = tape.constant(rng.normal(size=(34, m.cfg.fused_width)))
    body_lat, body = m.body_decode(p, fused)
    assert body_lat.shape == (34, 256) and body.shape == (34, 27)
    assert m.hand_decode(p, fused, body_lat)[1].shape == (34, 114)


def test_face_sigmoid_midpoint_with_zero_head():
    m = CoGModel(SMALL)
    for name in m.store.names("face_dec.conv2"):
        m.store[name] = np.zeros_like(m.store[name])
    tape, p = bound(m)
    out = m.face_generate(p, tape.constant(np.random.default_rng(0).normal(size=(10, 8)))).data
    assert np.all(out == 0.5)


def test_tffd_and_style_constant_in_time():
    m = CoGModel(SMALL)
    tape, p = bound(m)
    face = tape.constant(np.tile(np.random.default_rng(1).uniform(size=51), (12, 1)))
    out = m.tffd(p, face).data
    np.testing.assert_allclose(out, np.tile(out[0], (12, 1)), atol=1e-12)
    style = m.style_vector(p, *m.labels(p, np.array([2]), np.array([1]), 12)).data
    np.testing.assert_allclose(style, np.tile(style[:, :1], (1, 12, 1)), atol=1e-12)


def test_style_differs_across_speakers():
    m = CoGModel(SMALL)
    tape, p = bound(m)
    s0 = m.style_vector(p, *m.labels(p, np.array([2]), np.array([0]), 5)).data
    s1 = m.style_vector(p, *m.labels(p, np.array([2]), np.array([1]), 5)).data
    assert not np.allclose(s0, s1)


def test_cw_attn_zero_mlp_halves_input():
    store = ParamStore(0)
    attn = ChannelAttention(store, "a", 6, 2)
    for name in store.names("a.fc1"):
        store[name] = np.zeros_like(store[name])
    x = np.random.default_rng(2).normal(size=(7, 6))
    tape = Tape()
    np.testing.assert_array_equal(attn(tape.bind(store), tape.constant(x)).data, x / 2)


def test_cw_attn_matches_direct_formula():
    store = ParamStore(0)
    attn = ChannelAttention(store, "a", 2, 2)
    store["a.fc0.w"], store["a.fc0.b"] = np.array([[1.0], [-2.0]]), np.array([0.5])
    store["a.fc1.w"], store["a.fc1.b"] = np.array([[1.5, -1.0]]), np.array([0.1, 0.2])
    x = np.array([[1.0, 2.0], [3.0, -1.0]])

    def mlp(v):
        return np.maximum(v @ store["a.fc0.w"] + store["a.fc0.b"], 0) @ store["a.fc1.w"] + store["a.fc1.b"]

    gate = 1 / (1 + np.exp(-(mlp(x.mean(0)) + mlp(x.max(0)))))
    tape = Tape()
    np.testing.assert_allclose(attn(tape.bind(store), tape.constant(x)).data, x * gate, atol=1e-14)


def test_cw_attn_never_amplifies():
    store = ParamStore(3)
    attn = ChannelAttention(store, "a", 5, 2)
    x = np.random.default_rng(3).normal(size=(3, 9, 5)) * 10
    tape = Tape()
    gate = attn.gate(tape.bind(store), tape.constant(x)).data
    assert np.all((gate > 0) & (gate < 1))
    out = attn(tape.bind(store), tape.constant(x)).data
    assert np.all(np.abs(out) <= np.abs(x))


def test_adaln_identity_init_is_layer_norm():
    store = ParamStore(0)
    ln = GestureAdaLN(store, "n", 4, 6)
    rng = np.random.default_rng(4)
    x, s = rng.normal(size=(5, 6)), rng.normal(size=(5, 4))
    tape = Tape()
    out = ln(tape.bind(store), tape.constant(x), tape.constant(s)).data
    ref = (x - x.mean(1, keepdims=True)) / np.sqrt(x.var(1, keepdims=True) + 1e-5)
    np.testing.assert_allclose(out, ref, atol=1e-12)


def test_adaln_constant_affine_sets_moments():
    store = ParamStore(0)
    ln = GestureAdaLN(store, "n", 3, 8)
    store["n.f.b"], store["n.g.b"] = np.full(8, -2.5), np.full(8, 0.7)
    x = np.random.default_rng(5).normal(size=(4, 8)) * 3
    tape = Tape()
    out = ln(tape.bind(store), tape.constant(x), tape.constant(np.ones((4, 3)))).data
    np.testing.assert_allclose(out.mean(1), 0.7, atol=1e-12)
    np.testing.assert_allclose(out.std(1), 2.5, atol=1e-5)


def test_adaln_invariant_to_per_frame_scale():
    store = ParamStore(1)
    ln = GestureAdaLN(store, "n", 3, 8)
    store["n.f.w"] = np.random.default_rng(6).normal(size=(3, 8))
    rng = np.random.default_rng(7)
    x, s = 10 * rng.normal(size=(4, 8)), rng.normal(size=(4, 3))  # keeps the variance floor negligible
    scale = np.array([[2.0], [3.0], [10.0], [1.0]])
    tape = Tape()
    p = tape.bind(store)
    a = ln(p, tape.constant(x), tape.constant(s)).data
    b = ln(p, tape.constant(x * scale), tape.constant(s)).data
    np.testing.assert_allclose(a, b, atol=1e-6)


def test_adaln_single_channel_and_flag():
    store = ParamStore(0)
    ln = GestureAdaLN(store, "n", 2, 1)
    tape = Tape()
    out = ln(tape.bind(store), tape.constant(np.full((3, 1), 4.0)), tape.constant(np.ones((3, 2)))).data
    assert np.all(out == 0.0)
    s2 = ParamStore(0)
    raw = GestureAdaLN(s2, "n", 2, 3, normalize=False)
    x = np.arange(6.0).reshape(2, 3)
    tape = Tape()
    np.testing.assert_array_equal(raw(tape.bind(s2), tape.constant(x), tape.constant(np.ones((2, 2)))).data, x)


def test_body_head_zero_gives_zero_pose_and_cascade_coupling():
    m = CoGModel(SMALL)
    for name in m.store.names("body_mlp.fc1"):
        m.store[name] = np.zeros_like(m.store[name])
    tape, p = bound(m)
    rng = np.random.default_rng(8)
    fused = tape.constant(rng.normal(size=(10, m.cfg.fused_width)))
    body_lat, body = m.body_decode(p, fused)
    assert np.all(body.data == 0.0)
    h1 = m.hand_decode(p, fused, body_lat)[1].data
    h2 = m.hand_decode(p, fused, tape.constant(body_lat.data + 0.5))[1].data
    assert not np.allclose(h1, h2)


def clip_inputs(cfg, t_len=34, seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(t_len, cfg.audio_dim)), rng.normal(size=(t_len, cfg.text_dim)), rng.uniform(-60, 60, (4, 141))


def test_synthesize_shapes_labels_and_determinism():
    clf = EmotionSpeakerClassifier(16, 4, hidden=8)
    clf.store.freeze()
    m = CoGModel(SMALL, classifier=clf)
    audio, text, seeds = clip_inputs(SMALL)
    face, gest = synthesize(m, audio, text, seeds)
    assert face.shape == (34, 51) and gest.body.shape == (34, 27) and gest.hands.shape == (34, 114)
    assert np.all((face >= 0) & (face <= 1)) and np.all(np.abs(gest.pose) <= 180)
    pred = clf.classify(audio)
    face2, gest2 = synthesize(m, audio, text, seeds, int(pred.emotion), int(pred.speaker))
    np.testing.assert_array_equal(face, face2)
    np.testing.assert_array_equal(gest.pose, gest2.pose)
    face3, gest3 = synthesize(m, audio, text, seeds)
    np.testing.assert_array_equal(gest.pose, gest3.pose)


def test_synthesize_soft_labels_and_errors():
    clf = EmotionSpeakerClassifier(16, 4, hidden=8)
    m = CoGModel(SMALL, classifier=clf)
    audio, text, seeds = clip_inputs(SMALL)
    face, _ = synthesize(m, audio, text, seeds, soft=True)
    assert face.shape == (34, 51)
    with pytest.raises(RuntimeError, match="no classifier"):
        synthesize(CoGModel(SMALL), audio, text, seeds)
    with pytest.raises(ValueError, match="seed frames"):
        synthesize(m, audio, text, seeds[:3], 0, 0)
    with pytest.raises(ValueError, match="equal T"):
        synthesize(m, audio, text[:30], seeds, 0, 0)


def test_face_path_is_cut_when_tffd_is_zero():
    m = CoGModel(SMALL)
    for name in m.store.names("tffd."):
        m.store[name] = np.zeros_like(m.store[name])
    audio, text, seeds = clip_inputs(SMALL, seed=1)
    base = m.predict(audio[None], text[None], seeds[None], [1], [2])
    for name in m.store.names("face_dec."):
        m.store[name] = m.store[name] + 0.5
    after_face = m.predict(audio[None], text[None], seeds[None], [1], [2])
    np.testing.assert_allclose(after_face["body"], base["body"], atol=1e-10)
    assert not np.allclose(after_face["face"], base["face"])
    moved = m.predict(audio[None] + 1.0, text[None], seeds[None], [1], [2])
    assert not np.allclose(moved["body"], base["body"])


def test_teacher_forcing_flag_routes_ground_truth_face():
    from composite_cases import random_batch

    batch = random_batch(0, SMALL, n=2, t_len=8)
    outs = []
    for tf in (False, True):
        m = CoGModel(ModelConfig(**{**SMALL.__dict__, "teacher_forcing": tf}))
        tape, p = bound(m)
        outs.append(m.forward_batch(tape, p, batch))
        expected = m.tffd(p, tape.constant(batch.face) if tf else outs[-1]["face"]).data
        np.testing.assert_array_equal(outs[-1]["face_lat"].data, expected)


def test_model_checkpoint_round_trip(tmp_path):
    clf = EmotionSpeakerClassifier(16, 4, hidden=8)
    clf.store.freeze()
    m = CoGModel(SMALL, seed=3, classifier=clf)
    path = m.save(tmp_path / "m.ckpt")
    back = CoGModel.load(path)
    assert back.classifier.frozen and back.cfg == m.cfg
    audio, text, seeds = clip_inputs(SMALL)
    np.testing.assert_array_equal(synthesize(back, audio, text, seeds)[1].pose, synthesize(m, audio, text, seeds)[1].pose)


@pytest.mark.parametrize("case", ["face_dec", "tffd", "cw_attn", "hynet_adaln", "body_path", "hand_path"])
def test_composite_gradients(case):
    for seed in smooth_seeds(COMPOSITE_CASES[case], n=2):
        assert grad_check(*COMPOSITE_CASES[case](seed), max_entries=25) < 1e-4


def test_end_to_end_gradient_tiny():
    assert TINY.latent == 4
    builder, store = end_to_end(0)
    assert grad_check(builder, store, max_entries=6, rng=np.random.default_rng(0)) < 1e-3
