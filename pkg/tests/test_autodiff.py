import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cogsynth.autodiff import (
    AdamState,
    OpError,
    ParamStore,
    Tape,
    adam_step,
    grad_check,
    load_checkpoint,
    op_kinds,
    save_checkpoint,
)
from cogsynth.autodiff import ops as F
from cogsynth.autodiff.layers import LSTM, TCN, Linear

from gradcases import OP_CASES


def conv_oracle(x, w, b, dilation=1):
    """Direct triple loop over time, output channel and kernel tap."""
    t_len, c_in = x.shape
    k, _, c_out = w.shape
    pad = dilation * (k - 1) // 2
    out = np.zeros((t_len, c_out))
    for t in range(t_len):
        for o in range(c_out):
            acc = b[o]
            for j in range(k):
                src = t + j * dilation - pad
                if 0 <= src < t_len:
                    acc += sum(x[src, c] * w[j, c, o] for c in range(c_in))
            out[t, o] = acc
    return out


def test_sigmoid_of_zero():
    tape = Tape()
    assert F.sigmoid(tape.constant([0.0])).data.tolist() == [0.5]


def test_concat_shape():
    tape = Tape()
    out = F.concat([tape.constant(np.zeros((2, 3))), tape.constant(np.zeros((2, 5)))])
    assert out.shape == (2, 8)


@pytest.mark.parametrize("dilation", [1, 2])
def test_conv_matches_loop_oracle(dilation):
    rng = np.random.default_rng(3)
    x, w, b = rng.normal(size=(8, 4)), rng.normal(size=(3, 4, 6)), rng.normal(size=6)
    tape = Tape()
    out = F.conv1d(tape.constant(x), tape.constant(w), tape.constant(b), dilation=dilation)
    assert out.shape == (8, 6)
    np.testing.assert_allclose(out.data, conv_oracle(x, w, b, dilation), atol=1e-12)


def edge_conv_oracle(x, w, b, dilation=1):
    """Loop oracle with boundary frames replicated instead of zero-filled."""
    t_len = x.shape[0]
    k = w.shape[0]
    pad = dilation * (k - 1) // 2
    out = np.tile(b, (t_len, 1)).astype(float)
    for t in range(t_len):
        for j in range(k):
            src = min(max(t + j * dilation - pad, 0), t_len - 1)
            out[t] += x[src] @ w[j]
    return out


@pytest.mark.parametrize("dilation", [1, 4])
def test_edge_padded_conv_matches_oracle(dilation):
    rng = np.random.default_rng(5)
    x, w, b = rng.normal(size=(5, 3)), rng.normal(size=(3, 3, 2)), rng.normal(size=2)
    tape = Tape()
    out = F.conv1d(tape.constant(x), tape.constant(w), tape.constant(b), dilation=dilation, padding="edge")
    np.testing.assert_allclose(out.data, edge_conv_oracle(x, w, b, dilation), atol=1e-12)


def test_edge_padding_keeps_constant_sequences_constant():
    rng = np.random.default_rng(6)
    x = np.tile(rng.normal(size=4), (9, 1))
    tape = Tape()
    out = F.conv1d(tape.constant(x), tape.constant(rng.normal(size=(3, 4, 5))), dilation=2, padding="edge").data
    np.testing.assert_allclose(out, np.tile(out[0], (9, 1)), atol=1e-12)
    with pytest.raises(OpError, match="padding"):
        F.conv1d(tape.constant(x), tape.constant(np.ones((3, 4, 5))), padding="wrap")


def test_conv_batched_equals_per_item():
    rng = np.random.default_rng(4)
    x, w, b = rng.normal(size=(3, 8, 4)), rng.normal(size=(5, 4, 2)), rng.normal(size=2)
    tape = Tape()
    out = F.conv1d(tape.constant(x), tape.constant(w), tape.constant(b)).data
    for i in range(3):
        np.testing.assert_allclose(out[i], conv_oracle(x[i], w, b), atol=1e-12)


def test_backward_identity_and_sigmoid():
    tape = Tape()
    p = tape.param("p", 2.0)
    assert tape.backward(F.identity(p))["p"] == pytest.approx(1.0)
    tape = Tape()
    p = tape.param("p", 0.0)
    assert tape.backward(F.sigmoid(p))["p"] == pytest.approx(0.25)


def test_backward_rejects_non_scalar():
    tape = Tape()
    p = tape.param("p", np.ones(3))
    with pytest.raises(OpError, match="scalar"):
        tape.backward(F.sigmoid(p))


def test_unreachable_param_gets_zero_grad():
    tape = Tape()
    a = tape.param("a", np.ones(3))
    tape.param("unused", np.ones((2, 2)))
    grads = tape.backward(F.mse(a, tape.constant(np.zeros(3))))
    assert np.array_equal(grads["unused"], np.zeros((2, 2)))


def test_unknown_kind_and_shape_errors():
    tape = Tape()
    x = tape.constant(np.zeros((4, 3)))
    with pytest.raises(OpError, match="unknown op kind"):
        tape.apply("fft", [x])
    with pytest.raises(OpError, match=r"linear: .*3.*\(5, 2\)"):
        F.linear(x, tape.constant(np.zeros((5, 2))))
    with pytest.raises(OpError, match="temporal_conv1d"):
        F.conv1d(x, tape.constant(np.zeros((3, 2, 2))))
    with pytest.raises(OpError, match="embed_lookup"):
        F.embed(tape.constant(np.zeros((4, 2))), [4])


def test_registry_covers_required_kinds():
    required = {
        "temporal_conv1d", "linear", "lstm_step", "sigmoid", "tanh", "relu", "softmax",
        "layer_stats_normalize", "avg_pool_time", "max_pool_time", "concat_channels",
        "embed_lookup", "elementwise_mul", "elementwise_add", "cosine_similarity", "mse",
        "l1", "cross_entropy", "scalar_weighted_sum",
    }
    assert required <= set(op_kinds())
    assert set(OP_CASES) == set(op_kinds())


@pytest.mark.parametrize("kind", sorted(OP_CASES))
def test_op_gradients(kind):
    for seed in range(10):
        build, store = OP_CASES[kind](seed)
        assert grad_check(build, store, eps=1e-5) < 1e-4, (kind, seed)


def test_grad_check_linear_layer():
    store = ParamStore(1)
    layer = Linear(store, "lin", 4, 3)
    x = np.random.default_rng(0).normal(size=(5, 4))

    def build(tape, p):
        return F.mse(layer(p, tape.constant(x)), tape.constant(np.ones((5, 3))))

    assert grad_check(build, store) < 1e-6


def test_grad_check_constant_loss_is_zero():
    store = ParamStore(0)
    store.add("w", (3, 2))

    def build(tape, p):
        return F.mse(tape.constant(np.ones(2)), tape.constant(np.zeros(2)))

    assert grad_check(build, store) == 0.0


def test_grad_check_rejects_non_finite():
    store = ParamStore(0)
    store.add("w", (2,))

    def build(tape, p):
        return F.mse(tape.constant([np.inf, 0.0]), p["w"])

    with pytest.raises(FloatingPointError):
        grad_check(build, store)


def test_grad_check_three_layer_tcn():
    store = ParamStore(5)
    tcn = TCN(store, "tcn", [3, 5, 5, 2])
    rng = np.random.default_rng(5)
    x, y = rng.normal(size=(2, 9, 3)), rng.normal(size=(2, 9, 2))

    def build(tape, p):
        return F.mse(tcn(p, tape.constant(x)), tape.constant(y))

    assert grad_check(build, store) < 1e-4


def test_grad_check_lstm_stack():
    store = ParamStore(6)
    lstm = LSTM(store, "lstm", 3, 4, n_layers=2)
    rng = np.random.default_rng(6)
    x, y = rng.normal(size=(2, 5, 3)), rng.normal(size=(2, 5, 4))

    def build(tape, p):
        return F.mse(lstm(p, tape.constant(x)), tape.constant(y))

    assert grad_check(build, store) < 1e-4


def test_fan_out_accumulates():
    rng = np.random.default_rng(0)
    x0 = rng.normal(size=(3, 4))

    def grad_of(fn):
        tape = Tape()
        x = tape.param("x", x0)
        return tape.backward(fn(tape, x))["x"]

    f = lambda tape, x: F.mse(F.sigmoid(x), tape.constant(np.zeros((3, 4))))
    g = lambda tape, x: F.l1(F.tanh(x), tape.constant(np.ones((3, 4))))
    both = grad_of(lambda tape, x: F.weighted_sum([f(tape, x), g(tape, x)], [1.0, 1.0]))
    np.testing.assert_allclose(both, grad_of(f) + grad_of(g), atol=1e-15)


def test_softmax_rows_sum_to_one_and_sigmoid_open_interval():
    tape = Tape()
    x = tape.constant(np.random.default_rng(1).normal(scale=30, size=(6, 9)))
    np.testing.assert_allclose(F.softmax(x).data.sum(axis=-1), 1.0, atol=1e-9)
    s = F.sigmoid(tape.constant(np.linspace(-30, 30, 101))).data
    assert np.all((s > 0) & (s < 1))


def test_layer_norm_of_single_channel_is_zero():
    tape = Tape()
    out = F.layer_norm(tape.constant(np.full((4, 1), 3.0)))
    assert np.array_equal(out.data, np.zeros((4, 1)))


def test_init_is_seed_deterministic():
    def build(seed):
        store = ParamStore(seed)
        TCN(store, "a", [4, 8, 2])
        LSTM(store, "b", 2, 3)
        return store

    a, b, c = build(11), build(11), build(12)
    assert all(np.array_equal(a[n], b[n]) for n in a)
    assert not all(np.array_equal(a[n], c[n]) for n in a)


def test_lstm_forget_bias_is_one():
    store = ParamStore(0)
    LSTM(store, "l", 2, 3, n_layers=1)
    assert store["l.l0.b"].tolist() == [0.0] * 3 + [1.0] * 3 + [0.0] * 6


# ---------------------------------------------------------------------- Adam


def test_adam_first_step_is_lr_times_sign():
    store = ParamStore(0)
    store.add("p", (5,), "zeros")
    g = np.array([3.0, -0.5, 2e-3, -40.0, 1.0])
    adam_step(store, {"p": g}, state := AdamState(lr=0.01))
    np.testing.assert_allclose(store["p"], -0.01 * np.sign(g), rtol=1e-4)
    assert state.step == 1


def test_adam_zero_grad_leaves_params():
    store = ParamStore(0)
    store.add("p", (3,))
    before = store["p"].copy()
    state = AdamState()
    adam_step(store, {"p": np.zeros(3)}, state)
    assert np.array_equal(store["p"], before) and state.step == 1


def test_adam_converges_on_quadratic():
    store = ParamStore(0)
    store.add("p", (), 0.0)
    state = AdamState(lr=0.1)
    for _ in range(100):
        tape = Tape()
        p = tape.bind(store)["p"]
        grads = tape.backward(F.mse(p, tape.constant(3.0)))
        adam_step(store, grads, state)
    assert abs(float(store["p"]) - 3.0) < 0.1


def test_adam_skips_frozen_and_checks_shapes():
    store = ParamStore(0)
    store.add("a", (2,))
    store.add("b", (2,))
    store.freeze("a")
    before = store["a"].copy()
    adam_step(store, {"a": np.ones(2), "b": np.ones(2)}, AdamState())
    assert np.array_equal(store["a"], before)
    with pytest.raises(ValueError, match="shape"):
        adam_step(store, {"b": np.ones(3)}, AdamState())
    with pytest.raises(KeyError):
        adam_step(store, {"zz": np.ones(3)}, AdamState())


# ---------------------------------------------------------------- checkpoint


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(9)
    tensors = {
        "a.w": rng.normal(size=(3, 4)),
        "b": np.array([np.pi, -0.0, 1e-300, np.nextafter(1.0, 2.0)]),
        "scalar": np.array(2.5),
        "f32": rng.normal(size=5).astype(np.float32),
    }
    path = save_checkpoint(tmp_path / "x.ckpt", tensors, {"frozen": True})
    back, meta = load_checkpoint(path)
    assert meta == {"frozen": True}
    for k, v in tensors.items():
        assert back[k].dtype == v.dtype and back[k].shape == v.shape
        assert back[k].tobytes() == v.tobytes()


def test_checkpoint_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"not a checkpoint")
    with pytest.raises(ValueError, match="magic"):
        load_checkpoint(bad)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(allow_nan=False, width=64), min_size=1, max_size=20))
def test_checkpoint_round_trip_property(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("ck") / "p.ckpt"
    arr = np.array(values)
    back, _ = load_checkpoint(save_checkpoint(path, {"v": arr}))
    assert back["v"].tobytes() == arr.tobytes()
