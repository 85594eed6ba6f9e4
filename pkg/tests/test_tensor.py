import numpy as np
import pytest

from bjdd import tensor as T
from bjdd.tensor import GraphConsumedError, Tensor

from gradcheck import default_dtype, gradcheck, op_gradient_cases

F32_CASES = op_gradient_cases(np.float32)
F64_CASES = op_gradient_cases(np.float64)
CASE_IDS = [name for name, _, _ in F64_CASES]


@pytest.mark.parametrize("case", F32_CASES, ids=CASE_IDS)
def test_op_gradients_float32(case):
    _, build, arrays = case
    gradcheck(build, arrays, h=1e-3, tol=1e-2)


@pytest.mark.parametrize("case", F64_CASES, ids=CASE_IDS)
def test_op_gradients_float64(case):
    _, build, arrays = case
    gradcheck(build, arrays, h=1e-5, tol=1e-5)


def test_default_dtype_switch():
    assert Tensor([1.0]).dtype == np.float32
    with default_dtype(np.float64):
        assert Tensor([1.0]).dtype == np.float64
    assert Tensor([1.0]).dtype == np.float32
    with pytest.raises(ValueError):
        T.set_default_dtype(np.int32)


def test_add_and_mul_values():
    a = Tensor([1.0, 2.0])
    b = Tensor([3.0, 4.0])
    assert np.array_equal(T.add(a, b).data, [4.0, 6.0])
    assert np.array_equal(T.mul(a, b).data, [3.0, 8.0])
    assert np.array_equal((a - b).data, [-2.0, -2.0])
    assert np.array_equal((1.0 - a).data, [0.0, -1.0])
    assert np.array_equal((2.0 * a).data, [2.0, 4.0])
    with pytest.raises(ValueError):
        T.add(a, Tensor([1.0, 2.0, 3.0]))
    with pytest.raises(ValueError):
        T.mul(a, Tensor([[1.0], [2.0]]))


def test_relu_values():
    x = Tensor([-3.0, 0.0, 2.0])
    assert np.array_equal(T.relu(x).data, [0.0, 0.0, 2.0])


def test_relu_subgradient_zero_at_zero():
    x = Tensor([0.0], requires_grad=True)
    T.mean(T.relu(x)).backward()
    assert x.grad[0] == 0.0


def test_leaky_relu_values():
    x = Tensor([-1.0, 0.0, 2.0])
    out = T.leaky_relu(x, 0.2)
    assert np.allclose(out.data, [-0.2, 0.0, 2.0])


def test_sigmoid_values():
    assert T.sigmoid(Tensor(0.0)).item() == 0.5
    out = T.sigmoid(Tensor([-40.0, 40.0]))
    assert np.all(np.isfinite(out.data))
    assert 0.0 <= out.data[0] < 1e-6
    assert 1.0 - 1e-6 < out.data[1] <= 1.0


def test_mean_square_values():
    x = Tensor([1.0, 2.0, 3.0])
    assert T.mean_square(x, x).item() == 0.0
    assert T.mean_square(Tensor([0.0, 0.0]), Tensor([1.0, 1.0])).item() == 1.0
    with pytest.raises(ValueError):
        T.mean_square(x, Tensor([1.0]))


def test_mean_values():
    x = Tensor(np.arange(24.0).reshape(2, 3, 4))
    assert T.mean(x).item() == pytest.approx(11.5)
    got = T.mean(x, axis=(0, 2)).data
    want = x.data.mean(axis=(0, 2))
    assert np.allclose(got, want)


def test_clip_values_and_grad():
    x = Tensor([-1.0, 0.5, 2.0], requires_grad=True)
    out = T.clip(x, 0.0, 1.0)
    assert np.array_equal(out.data, [0.0, 0.5, 1.0])
    T.mean(out).backward()
    assert np.allclose(x.grad, [0.0, 1.0 / 3.0, 0.0])


def test_log_values():
    x = Tensor([1.0, np.e], dtype=np.float64)
    assert np.allclose(T.log(x).data, [0.0, 1.0])


def test_backward_chain_rule():
    w = Tensor(2.0, requires_grad=True)
    x = Tensor(3.0)
    loss = T.mean_square(T.mul(w, x), Tensor(0.0))
    loss.backward()
    assert w.grad == pytest.approx(36.0)


def test_backward_accumulates_over_reuse():
    x = Tensor([1.0, 2.0], requires_grad=True)
    y = T.add(x, x)
    T.mean(y).backward()
    assert np.allclose(x.grad, [1.0, 1.0])


def test_backward_rejects_nonscalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ValueError):
        T.mul(x, 2.0).backward()


def test_backward_rejects_consumed_graph():
    x = Tensor([1.0, 2.0], requires_grad=True)
    loss = T.mean(x)
    loss.backward()
    with pytest.raises(GraphConsumedError):
        loss.backward()


def test_unused_parameter_keeps_zero_grad():
    used = Tensor([1.0], requires_grad=True)
    unused = Tensor([5.0, 6.0], requires_grad=True)
    used.zero_grad()
    unused.zero_grad()
    T.mean(used).backward()
    assert np.array_equal(unused.grad, [0.0, 0.0])
    assert np.array_equal(used.grad, [1.0])


def test_no_grad_blocks_recording():
    x = Tensor([1.0], requires_grad=True)
    with T.no_grad():
        y = T.mul(x, 3.0)
    assert not y.requires_grad
    assert y._backward_fn is None


def test_detach_shares_data_without_graph():
    x = Tensor([1.0, 2.0], requires_grad=True)
    d = x.detach()
    assert not d.requires_grad
    assert d.data is x.data


def test_conv2d_identity_kernel():
    x = Tensor([[[[1.0, 2.0], [3.0, 4.0]]]])
    w = Tensor([[[[1.0]]]])
    b = Tensor([0.0])
    out = T.conv2d(x, w, b, stride=1, padding=0)
    assert np.array_equal(out.data, x.data)


def test_conv2d_all_ones_padded():
    x = Tensor(np.ones((1, 1, 3, 3), dtype=np.float32))
    w = Tensor(np.ones((1, 1, 3, 3), dtype=np.float32))
    b = Tensor([0.0])
    out = T.conv2d(x, w, b, stride=1, padding=1).data[0, 0]
    assert out[1, 1] == 9.0
    assert out[0, 0] == 4.0
    assert out[0, 1] == 6.0


def test_conv2d_output_size_floor():
    x = Tensor(np.zeros((1, 1, 5, 7), dtype=np.float32))
    w = Tensor(np.zeros((2, 1, 3, 3), dtype=np.float32))
    out = T.conv2d(x, w, None, stride=2, padding=0)
    assert out.shape == (1, 2, 2, 3)


def test_conv2d_validation():
    x = Tensor(np.zeros((1, 2, 4, 4), dtype=np.float32))
    w = Tensor(np.zeros((3, 2, 3, 3), dtype=np.float32))
    with pytest.raises(ValueError):
        T.conv2d(x, w, None, stride=0)
    with pytest.raises(ValueError):
        T.conv2d(x, Tensor(np.zeros((3, 5, 3, 3), dtype=np.float32)), None)
    with pytest.raises(ValueError):
        T.conv2d(x, w, Tensor(np.zeros(7, dtype=np.float32)))
    with pytest.raises(ValueError):
        T.conv2d(x, w, None, padding=3)
    with pytest.raises(ValueError):
        T.conv2d(Tensor(np.zeros((1, 2, 2, 2), dtype=np.float32)), w, None)


def test_conv2d_linearity():
    rng = np.random.default_rng(5)
    x = rng.random((2, 3, 8, 8), dtype=np.float32)
    y = rng.random((2, 3, 8, 8), dtype=np.float32)
    w = Tensor(rng.standard_normal((4, 3, 3, 3)).astype(np.float32))
    alpha, beta = 0.6, -1.2
    mixed = T.conv2d(Tensor(alpha * x + beta * y), w, None, padding=1).data
    parts = (alpha * T.conv2d(Tensor(x), w, None, padding=1).data
             + beta * T.conv2d(Tensor(y), w, None, padding=1).data)
    assert np.max(np.abs(mixed - parts)) < 1e-4


def test_pixel_shuffle_mapping():
    x = Tensor(np.array([1.0, 2.0, 3.0, 4.0], dtype=np.float32).reshape(1, 4, 1, 1))
    out = T.pixel_shuffle(x, 2)
    assert out.shape == (1, 1, 2, 2)
    assert np.array_equal(out.data[0, 0], [[1.0, 2.0], [3.0, 4.0]])


def test_pixel_shuffle_shape_contract():
    x = Tensor(np.zeros((1, 256, 50, 50), dtype=np.float32))
    assert T.pixel_shuffle(x, 2).shape == (1, 64, 100, 100)
    with pytest.raises(ValueError):
        T.pixel_shuffle(Tensor(np.zeros((1, 6, 2, 2), dtype=np.float32)), 2)


def test_pixel_shuffle_roundtrip_bitwise():
    rng = np.random.default_rng(11)
    x = rng.random((2, 12, 5, 7), dtype=np.float32)
    back = T.pixel_unshuffle(T.pixel_shuffle(Tensor(x), 2), 2)
    assert np.array_equal(back.data, x)


def test_dropout_identity_cases():
    rng = np.random.default_rng(0)
    x = Tensor(rng.random((3, 4), dtype=np.float32))
    keep1 = T.dropout(x, 1.0, mode="train", rng=rng)
    assert keep1.data is x.data
    ev = T.dropout(x, 0.5, mode="eval")
    assert ev.data is x.data
    with pytest.raises(ValueError):
        T.dropout(x, 0.0, mode="train", rng=rng)
    with pytest.raises(ValueError):
        T.dropout(x, 0.5, mode="train")


def test_dropout_statistics():
    rng = np.random.default_rng(123)
    x = Tensor(np.ones(1_000_000, dtype=np.float32))
    out = T.dropout(x, 0.5, mode="train", rng=rng).data
    zero_frac = np.mean(out == 0.0)
    assert abs(zero_frac - 0.5) < 0.01
    assert abs(out.mean() - 1.0) < 0.01


def test_batch_norm_normalizes():
    rng = np.random.default_rng(7)
    x = Tensor(rng.standard_normal((4, 2, 3, 3)).astype(np.float32))
    gamma = Tensor(np.ones(2, dtype=np.float32))
    beta = Tensor(np.zeros(2, dtype=np.float32))
    state = T.BatchNormState(2)
    out = T.batch_norm(x, gamma, beta, state, mode="train").data
    for c in range(2):
        vals = out[:, c]
        assert abs(vals.mean()) < 1e-5
        assert abs(vals.var() - 1.0) < 1e-3


def test_batch_norm_constant_channel_gives_beta():
    x = Tensor(np.full((2, 1, 3, 3), 5.0, dtype=np.float32))
    gamma = Tensor(np.ones(1, dtype=np.float32))
    beta = Tensor(np.full(1, 0.25, dtype=np.float32))
    out = T.batch_norm(x, gamma, beta, T.BatchNormState(1), mode="train").data
    assert np.allclose(out, 0.25)


def test_batch_norm_running_stats_and_eval():
    rng = np.random.default_rng(8)
    gamma = Tensor(np.ones(2, dtype=np.float32))
    beta = Tensor(np.zeros(2, dtype=np.float32))
    state = T.BatchNormState(2)
    with pytest.raises(RuntimeError):
        T.batch_norm(Tensor(rng.standard_normal((2, 2, 3, 3)).astype(np.float32)),
                     gamma, beta, state, mode="eval")
    x = rng.standard_normal((4, 2, 3, 3)).astype(np.float32)
    T.batch_norm(Tensor(x), gamma, beta, state, mode="train")
    mu = x.mean(axis=(0, 2, 3))
    var = x.var(axis=(0, 2, 3))
    assert np.allclose(state.mean, 0.1 * mu, atol=1e-6)
    assert np.allclose(state.var, 0.9 * 1.0 + 0.1 * var, atol=1e-6)
    assert state.initialized
    # frozen-stats forward must not move the running buffers
    before = (state.mean.copy(), state.var.copy(), state.batches.copy())
    T.batch_norm(Tensor(x), gamma, beta, state, mode="train", update_running=False)
    assert np.array_equal(before[0], state.mean)
    assert np.array_equal(before[1], state.var)
    assert np.array_equal(before[2], state.batches)
    out = T.batch_norm(Tensor(x), gamma, beta, state, mode="eval").data
    want = (x - state.mean[None, :, None, None]) / np.sqrt(state.var + 1e-5)[None, :, None, None]
    assert np.allclose(out, want, atol=1e-6)


def test_same_seed_same_results():
    def run():
        rng = np.random.default_rng(21)
        x = Tensor(rng.random((2, 3, 6, 6), dtype=np.float32), requires_grad=True)
        w = Tensor(rng.standard_normal((4, 3, 3, 3)).astype(np.float32), requires_grad=True)
        out = T.relu(T.conv2d(x, w, None, padding=1))
        loss = T.mean_square(out, Tensor(np.zeros(out.shape, dtype=np.float32)))
        loss.backward()
        return loss.item(), x.grad.copy(), w.grad.copy()

    l1, xg1, wg1 = run()
    l2, xg2, wg2 = run()
    assert l1 == l2
    assert np.array_equal(xg1, xg2)
    assert np.array_equal(wg1, wg2)
