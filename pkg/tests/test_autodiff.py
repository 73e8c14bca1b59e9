import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from domaingap import autodiff as ad
from domaingap.autodiff import AdamState, Graph, Tensor
from domaingap.autodiff.checkpoint import CheckpointError, decode, encode, load_checkpoint, save_checkpoint
from domaingap.exceptions import ClassRangeError, NumericError, ShapeError

SEEDS = range(50)


def conv_reference(x, w, stride, padding):
    """Direct nested-loop cross-correlation with zero padding."""
    n, c, h, wd = x.shape
    k, _, kh, kw = w.shape
    xp = np.zeros((n, c, h + 2 * padding, wd + 2 * padding))
    xp[:, :, padding : padding + h, padding : padding + wd] = x
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((n, k, ho, wo))
    for b in range(n):
        for o in range(k):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for ci in range(c):
                        for u in range(kh):
                            for v in range(kw):
                                acc += xp[b, ci, i * stride + u, j * stride + v] * w[o, ci, u, v]
                    out[b, o, i, j] = acc
    return out


def away_from_zero(rng, shape, margin=0.05):
    v = rng.standard_normal(shape)
    return np.where(np.abs(v) < margin, np.sign(v + 1e-300) * margin + v, v)


# ---------------------------------------------------------------------------
# convolution forward


def test_conv_identity_kernel():
    x = np.random.default_rng(0).standard_normal((2, 1, 4, 5))
    out = ad.conv2d(Tensor(x), Tensor(np.ones((1, 1, 1, 1))))
    assert np.array_equal(out.data, x)


def test_conv_constant_input_all_ones_kernel():
    out = ad.conv2d(Tensor(np.full((1, 1, 5, 5), 0.7)), Tensor(np.ones((1, 1, 3, 3))))
    assert out.shape == (1, 1, 3, 3)
    np.testing.assert_allclose(out.data, 9 * 0.7, rtol=0, atol=1e-15)


def test_conv_matches_nested_loop_reference():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((1, 2, 5, 5))
    w = rng.standard_normal((3, 2, 3, 3))
    np.testing.assert_allclose(ad.conv2d(Tensor(x), Tensor(w)).data, conv_reference(x, w, 1, 0), atol=1e-12)


@pytest.mark.parametrize("stride,padding,k", [(1, 1, 3), (2, 1, 3), (2, 1, 4), (1, 3, 7), (3, 0, 2), (1, 0, 1)])
def test_conv_matches_reference_stride_padding(stride, padding, k):
    rng = np.random.default_rng(stride * 10 + padding)
    x = rng.standard_normal((2, 3, 7, 6))
    w = rng.standard_normal((4, 3, k, k))
    got = ad.conv2d(Tensor(x), Tensor(w), stride, padding).data
    ref = conv_reference(x, w, stride, padding)
    assert got.shape == ref.shape
    assert got.shape[2] == (7 + 2 * padding - k) // stride + 1
    np.testing.assert_allclose(got, ref, atol=1e-12)


def test_conv_channel_mismatch():
    with pytest.raises(ShapeError):
        ad.conv2d(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))))


def test_conv_kernel_too_large():
    with pytest.raises(ShapeError):
        ad.conv2d(Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 3, 3))))


def test_conv_bad_stride():
    with pytest.raises(ValueError):
        ad.conv2d(Tensor(np.zeros((1, 1, 4, 4))), Tensor(np.zeros((1, 1, 3, 3))), stride=0)


def test_conv_recorded_only_when_tracking():
    x = Tensor(np.ones((1, 1, 3, 3)))
    w = Tensor(np.ones((1, 1, 1, 1)))
    assert ad.conv2d(x, w).op is None
    w.requires_grad = True
    assert ad.conv2d(x, w).op == "conv2d"
    with ad.no_grad():
        assert ad.conv2d(x, w).op is None


# ---------------------------------------------------------------------------
# activations and losses


def test_activation_values():
    assert ad.apply_activation("leaky_relu", Tensor([-1.0]), slope=0.2).item() == pytest.approx(-0.2)
    assert ad.apply_activation("tanh", Tensor([0.0])).item() == 0.0
    sm = ad.apply_activation("softmax", Tensor(np.zeros((1, 8, 2, 2))))
    np.testing.assert_allclose(sm.data, 0.125, atol=1e-15)
    assert ad.apply_activation("sigmoid", Tensor([0.0])).item() == pytest.approx(0.5)


def test_activation_rejects_bad_slope():
    for slope in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            ad.leaky_relu(Tensor([1.0]), slope)


@pytest.mark.parametrize("kind", ["leaky_relu", "tanh", "sigmoid", "softmax", "relu"])
def test_activation_rejects_non_finite(kind):
    with pytest.raises(NumericError):
        ad.apply_activation(kind, Tensor(np.full((1, 2, 1, 1), np.nan)))


def test_activation_unknown_kind():
    with pytest.raises(ValueError):
        ad.apply_activation("swish", Tensor([1.0]))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_softmax_sums_to_one(seed):
    z = np.random.default_rng(seed).standard_normal((2, 8, 3, 3)) * 30
    s = ad.softmax_channel(Tensor(z)).data
    np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-9)
    assert np.isfinite(s).all()


def test_losses_by_hand():
    x = Tensor(np.random.default_rng(2).standard_normal((3, 4)))
    assert ad.compute_loss("l1", x, x).item() == 0.0
    assert ad.compute_loss("mean_squared", Tensor([0.5]), Tensor([1.0])).item() == 0.25
    logits = Tensor(np.zeros((1, 8, 2, 3)))
    labels = np.arange(6).reshape(1, 2, 3)
    assert ad.compute_loss("cross_entropy", logits, labels).item() == pytest.approx(math.log(8), abs=1e-12)


def test_cross_entropy_class_range():
    with pytest.raises(ClassRangeError):
        ad.cross_entropy(Tensor(np.zeros((1, 8, 1, 1))), np.array([[[8]]]))


def test_cross_entropy_large_logits_stable():
    z = np.zeros((1, 8, 1, 1))
    z[0, 3] = 1000.0
    assert ad.cross_entropy(Tensor(z), np.array([[[3]]])).item() == pytest.approx(0.0, abs=1e-12)


def test_mul_shape_mismatch():
    with pytest.raises(ShapeError):
        ad.mul(Tensor(np.ones(3)), Tensor(np.ones(4)))


def test_unknown_loss():
    with pytest.raises(ValueError):
        ad.compute_loss("hinge", Tensor([1.0]), Tensor([1.0]))


# ---------------------------------------------------------------------------
# backward


def test_backward_sum_gives_ones():
    w = Tensor(np.random.default_rng(3).standard_normal((2, 3, 4)), requires_grad=True)
    loss = ad.total(w)
    ad.backward(loss)
    assert np.array_equal(w.grad, np.ones((2, 3, 4)))
    assert loss.grad == 1.0


def test_backward_square_scalar():
    w = Tensor([3.0], requires_grad=True)
    ad.backward(ad.mse_loss(w, Tensor([0.0])))
    assert w.grad[0] == 6.0


def test_backward_accumulates_until_zeroed():
    w = Tensor([3.0], requires_grad=True)
    ad.backward(ad.total(ad.square(w)))
    ad.backward(ad.total(ad.square(w)))
    assert w.grad[0] == 12.0
    w.zero_grad()
    ad.backward(ad.total(ad.square(w)))
    assert w.grad[0] == 6.0


def test_backward_requires_scalar():
    w = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ShapeError):
        ad.backward(ad.scale(w, 2.0))


def test_shared_subexpression_gradient():
    w = Tensor([2.0], requires_grad=True)
    a = ad.square(w)
    ad.backward(ad.total(ad.mul(a, a)))  # w**4
    assert w.grad[0] == pytest.approx(32.0)


def test_graph_is_topological():
    rng = np.random.default_rng(4)
    x = Tensor(rng.standard_normal((1, 2, 4, 4)), requires_grad=True)
    w = Tensor(rng.standard_normal((2, 2, 3, 3)), requires_grad=True)
    h = ad.relu(ad.conv2d(x, w, 1, 1))
    loss = ad.mean(ad.square(h + ad.tanh(h)))
    graph = Graph.from_root(loss)
    seen = set()
    for rec in graph.nodes:
        for i in rec.input_ids:
            assert i in seen or i in {x.node_id, w.node_id}
        seen.add(rec.output_id)
    assert graph.nodes[-1].output_id == loss.node_id


def test_forward_replay_is_bit_identical():
    def run():
        rng = np.random.default_rng(5)
        x = Tensor(rng.standard_normal((2, 3, 6, 6)), requires_grad=True)
        w = Tensor(rng.standard_normal((4, 3, 3, 3)), requires_grad=True)
        loss = ad.mean(ad.square(ad.instance_norm(ad.conv2d(x, w, 2, 1))))
        ad.backward(loss)
        return loss.data.tobytes(), x.grad.tobytes(), w.grad.tobytes()

    assert run() == run()


def test_detach_cuts_the_graph():
    w = Tensor([1.5], requires_grad=True)
    y = ad.square(w).detach()
    assert not y.requires_grad and y.op is None


# ---------------------------------------------------------------------------
# finite differences for every op (relative error < 1e-4)


def _unary_cases(rng):
    x4 = lambda: Tensor(away_from_zero(rng, (2, 3, 4, 4)), requires_grad=True)  # noqa: E731
    return {
        "square": lambda t: ad.square(t),
        "absolute": lambda t: ad.absolute(t),
        "neg": lambda t: ad.neg(t),
        "scale": lambda t: ad.scale(t, -1.7),
        "add_scalar": lambda t: ad.add_scalar(t, 0.3),
        "relu": lambda t: ad.relu(t),
        "leaky_relu": lambda t: ad.leaky_relu(t, 0.2),
        "tanh": lambda t: ad.tanh(t),
        "sigmoid": lambda t: ad.sigmoid(t),
        "softmax": lambda t: ad.softmax_channel(t),
        "instance_norm": lambda t: ad.instance_norm(t),
        "upsample2x": lambda t: ad.upsample2x(t),
        "reshape": lambda t: ad.reshape(t, (6, 16)),
        "mean": lambda t: ad.mean(t),
    }, x4


UNARY = list(_unary_cases(np.random.default_rng(0))[0])


@pytest.mark.parametrize("name", UNARY)
def test_gradcheck_unary_ops(name):
    worst = 0.0
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        cases, make = _unary_cases(rng)
        x = make()
        weights = Tensor(rng.standard_normal(cases[name](Tensor(x.data)).shape))

        def fn():
            out = cases[name](x)
            return ad.total(ad.mul(out, weights)) if out.shape != () else out

        worst = max(worst, *ad.gradcheck(fn, [x]))
    assert worst < 1e-4


@pytest.mark.parametrize("name", ["add", "sub", "mul", "l1", "mse", "concat"])
def test_gradcheck_binary_ops(name):
    worst = 0.0
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        a = Tensor(rng.standard_normal((2, 3, 3)), requires_grad=True)
        b = Tensor(a.data + away_from_zero(rng, (2, 3, 3)), requires_grad=True)
        r = Tensor(rng.standard_normal((2, 3, 3)))
        r2 = Tensor(rng.standard_normal((4, 3, 3)))
        fns = {
            "add": lambda: ad.total(ad.mul(ad.add(a, b), r)),
            "sub": lambda: ad.total(ad.mul(ad.sub(a, b), r)),
            "mul": lambda: ad.total(ad.mul(ad.mul(a, b), r)),
            "l1": lambda: ad.l1_loss(a, b),
            "mse": lambda: ad.mse_loss(a, b),
            "concat": lambda: ad.total(ad.mul(ad.concat_batch([a, b]), r2)),
        }
        worst = max(worst, *ad.gradcheck(fns[name], [a, b]))
    assert worst < 1e-4


@pytest.mark.parametrize(
    "cin,cout,k,stride,padding",
    [
        (3, 4, 3, 1, 1),  # stride 1, K >= C: scatter path
        (4, 2, 3, 1, 1),  # stride 1, K < C: transposed path
        (2, 3, 4, 2, 1),  # stride 2
        (3, 2, 5, 1, 2),  # wide kernel, transposed path
        (4, 3, 3, 2, 1),  # stride 2, odd input
        (2, 2, 3, 1, 0),  # no padding
    ],
)
def test_gradcheck_conv2d(cin, cout, k, stride, padding):
    worst = 0.0
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        x = Tensor(rng.standard_normal((2, cin, 5, 5)), requires_grad=True)
        w = Tensor(rng.standard_normal((cout, cin, k, k)), requires_grad=True)
        r = Tensor(rng.standard_normal(ad.conv2d(x, w, stride, padding).shape))
        worst = max(worst, *ad.gradcheck(lambda: ad.total(ad.mul(ad.conv2d(x, w, stride, padding), r)), [x, w]))
    assert worst < 1e-4


@pytest.mark.parametrize("pad", [1, 2, 3])
def test_reflect_pad_matches_numpy_and_gradcheck(pad):
    worst = 0.0
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        x = Tensor(rng.standard_normal((2, 3, 4, 5)), requires_grad=True)
        out = ad.reflect_pad(x, pad)
        assert np.array_equal(out.data, np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)), mode="reflect"))
        r = Tensor(rng.standard_normal(out.shape))
        worst = max(worst, *ad.gradcheck(lambda: ad.total(ad.mul(ad.reflect_pad(x, pad), r)), [x]))
    assert worst < 1e-4


def test_reflect_pad_too_wide():
    with pytest.raises(ShapeError):
        ad.reflect_pad(Tensor(np.zeros((1, 1, 3, 3))), 3)


def test_gradcheck_channel_bias():
    worst = 0.0
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        x = Tensor(rng.standard_normal((2, 3, 2, 2)), requires_grad=True)
        b = Tensor(rng.standard_normal(3), requires_grad=True)
        r = Tensor(rng.standard_normal((2, 3, 2, 2)))
        worst = max(worst, *ad.gradcheck(lambda: ad.total(ad.mul(ad.channel_bias(x, b), r)), [x, b]))
    assert worst < 1e-4


def test_gradcheck_cross_entropy():
    worst = 0.0
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        z = Tensor(rng.standard_normal((2, 8, 3, 3)), requires_grad=True)
        labels = rng.integers(0, 8, (2, 3, 3))
        worst = max(worst, *ad.gradcheck(lambda: ad.cross_entropy(z, labels), [z]))
    assert worst < 1e-4


def test_gradcheck_dropout_fixed_mask():
    worst = 0.0
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        x = Tensor(rng.standard_normal((1, 2, 3, 3)), requires_grad=True)
        worst = max(worst, *ad.gradcheck(
            lambda: ad.total(ad.square(ad.dropout(x, 0.5, np.random.default_rng(seed)))), [x]))
    assert worst < 1e-4


def test_dropout_inactive_outside_training():
    x = Tensor(np.ones((4, 4)))
    assert ad.dropout(x, 0.5, np.random.default_rng(0), training=False) is x
    kept = ad.dropout(x, 0.5, np.random.default_rng(0)).data
    assert set(np.unique(kept)) <= {0.0, 2.0}


# ---------------------------------------------------------------------------
# ADAM


def test_adam_zero_gradient_is_identity():
    w = Tensor(np.random.default_rng(6).standard_normal((3, 3)), requires_grad=True)
    before = w.data.copy()
    state = AdamState.preset("segnet")
    w.grad = np.zeros((3, 3))
    for _ in range(5):
        ad.adam_step([w], state)
    assert np.array_equal(w.data, before)
    assert state.step_count == 5


def adam_reference(w, grad_fn, lr, b1, b2, eps, steps):
    m = v = 0.0
    for t in range(1, steps + 1):
        g = grad_fn(w)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w = w - lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
    return w


def test_adam_first_step_hand_trace():
    w = Tensor([1.0], requires_grad=True)
    state = AdamState(lr=0.001)
    ad.backward(ad.total(ad.square(w)))
    ad.adam_step([w], state)
    # m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
    assert w.data[0] == pytest.approx(1.0 - 0.001 * 2.0 / (2.0 + 1e-8), abs=1e-15)
    assert abs(w.data[0] - 0.999) < 1e-6
    assert np.array_equal(w.grad, [2.0])  # gradients untouched


def test_adam_converges_like_scalar_reference():
    w = Tensor([10.0], requires_grad=True)
    state = AdamState(lr=0.1)
    for _ in range(500):
        w.zero_grad()
        ad.backward(ad.total(ad.square(ad.add_scalar(w, -2.0))))
        ad.adam_step([w], state)
    ref = adam_reference(10.0, lambda x: 2 * (x - 2), 0.1, 0.9, 0.999, 1e-8, 500)
    assert abs(w.data[0] - 2.0) < 0.1
    assert w.data[0] == pytest.approx(ref, abs=1e-12)


def test_adam_presets():
    t = AdamState.preset("translator")
    s = AdamState.preset("segnet")
    assert (t.lr, t.beta1, t.beta2, t.epsilon) == (0.0002, 0.5, 0.999, 1e-8)
    assert (s.lr, s.beta1, s.beta2, s.epsilon) == (0.001, 0.9, 0.999, 1e-8)
    with pytest.raises(ValueError):
        AdamState.preset("sgd")


def test_adam_shape_mismatch():
    w = Tensor(np.ones(3), requires_grad=True)
    state = AdamState().init_for([Tensor(np.ones(4))])
    with pytest.raises(ShapeError):
        ad.adam_step([w], state)


def test_adam_moments_track_parameter_shapes():
    ps = [Tensor(np.ones((2, 3)), requires_grad=True), Tensor(np.ones(4), requires_grad=True)]
    state = AdamState()
    ad.adam_step(ps, state)
    assert [m.shape for m in state.m] == [(2, 3), (4,)]
    assert [v.shape for v in state.v] == [(2, 3), (4,)]


# ---------------------------------------------------------------------------
# checkpoint


def test_checkpoint_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(7)
    arrays = {
        "G.stem.weight": rng.standard_normal((4, 3, 7, 7)),
        "bias": rng.standard_normal(5),
        "iteration": np.array(12.0),
        "naïve": np.array([np.inf, -0.0, 1e-310]),
    }
    save_checkpoint(tmp_path / "c.dgck", arrays)
    back = load_checkpoint(tmp_path / "c.dgck")
    assert list(back) == list(arrays)
    for k in arrays:
        assert back[k].shape == arrays[k].shape
        assert back[k].tobytes() == arrays[k].tobytes()


def test_checkpoint_layout():
    blob = encode({"ab": np.array([[1.0, 2.0]])})
    assert blob[:4] == b"DGCK"
    assert int.from_bytes(blob[4:8], "little") == 1
    assert int.from_bytes(blob[8:12], "little") == 2
    assert blob[12:14] == b"ab"
    assert int.from_bytes(blob[14:18], "little") == 2
    assert int.from_bytes(blob[18:26], "little") == 1
    assert int.from_bytes(blob[26:34], "little") == 2
    assert np.frombuffer(blob[34:], "<f8").tolist() == [1.0, 2.0]


@pytest.mark.parametrize("blob", [b"XXXX\x01\x00\x00\x00", b"DGCK\x02\x00\x00\x00", b"DGCK\x01\x00\x00\x00\x05\x00"])
def test_checkpoint_rejects_malformed(blob):
    with pytest.raises(CheckpointError):
        decode(blob)


def test_checkpoint_rejects_truncated_values():
    blob = encode({"w": np.ones(4)})
    with pytest.raises(CheckpointError):
        decode(blob[:-3])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=0, max_size=3), st.integers(0, 1000))
def test_checkpoint_round_trip_property(shape, seed):
    arr = np.random.default_rng(seed).standard_normal(tuple(shape))
    back = decode(encode({"x": arr}))["x"]
    assert back.shape == arr.shape and back.tobytes() == arr.tobytes()
