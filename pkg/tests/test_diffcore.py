import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from diffcore import layers as L
from diffcore.gradcheck import grad_check, relative_error
from diffcore.tensor import as_labels, as_tensor
from utils.errors import LabelError, NumericalError, ShapeError, StaleContextError


def conv_oracle(x, kernel, bias, stride, pad):
    x = np.pad(x.astype(np.float64), ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    n, c, h, w = x.shape
    cout, _, kh, kw = kernel.shape
    ho, wo = (h - kh) // stride + 1, (w - kw) // stride + 1
    out = np.zeros((n, cout, ho, wo))
    for b in range(n):
        for o in range(cout):
            for i in range(ho):
                for j in range(wo):
                    window = x[b, :, i * stride:i * stride + kh, j * stride:j * stride + kw]
                    out[b, o, i, j] = (window * kernel[o]).sum() + bias[o]
    return out


@pytest.mark.parametrize("n,c,h,k,stride,pad", [
    (1, 1, 5, 1, 1, 0),
    (2, 3, 8, 3, 1, 1),
    (3, 2, 9, 5, 1, 2),
    (4, 4, 7, 3, 2, 0),
    (2, 1, 16, 5, 1, 0),
    (1, 4, 6, 3, 1, 0),
])
def test_conv2d_matches_nested_loop_oracle(rng, n, c, h, k, stride, pad):
    x = rng.uniform(-0.5, 0.5, (n, c, h, h)).astype(np.float32)
    kernel = rng.uniform(-0.5, 0.5, (3, c, k, k)).astype(np.float32)
    bias = rng.uniform(-0.5, 0.5, 3).astype(np.float32)
    out, _ = L.conv2d(x, kernel, bias, stride=stride, pad=pad)
    assert_allclose(out, conv_oracle(x, kernel, bias, stride, pad), rtol=1e-5, atol=1e-5)


def test_conv2d_rejects_untiled_shapes(rng):
    x = rng.normal(size=(1, 1, 6, 6)).astype(np.float32)
    kernel = rng.normal(size=(2, 1, 3, 3)).astype(np.float32)
    with pytest.raises(ShapeError) as exc:
        L.conv2d(x, kernel, np.zeros(2, np.float32), stride=2)
    assert "(1, 1, 6, 6)" in str(exc.value)
    assert "(2, 1, 3, 3)" in str(exc.value)


def test_conv2d_rejects_channel_mismatch(rng):
    with pytest.raises(ShapeError):
        L.conv2d(np.ones((1, 2, 4, 4)), np.ones((1, 3, 3, 3)), np.zeros(1))


def _upstream(rng, shape):
    return rng.normal(size=shape)


def _weighted(out, weights):
    return float(np.sum(out.astype(np.float64) * weights))


@pytest.mark.parametrize("seed", range(5))
def test_conv2d_gradients(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(2, 2, 6, 6)).astype(np.float32)
    kernel = rng.normal(size=(3, 2, 3, 3)).astype(np.float32)
    bias = rng.normal(size=3).astype(np.float32)
    weights = _upstream(rng, (2, 3, 6, 6))

    def wrt_input(point):
        out, ctx = L.conv2d(point, kernel, bias, pad=1)
        return _weighted(out, weights), L.conv2d_backward(ctx, weights)[0]

    def wrt_kernel(point):
        out, ctx = L.conv2d(x, point, bias, pad=1)
        return _weighted(out, weights), L.conv2d_backward(ctx, weights)[1]

    def wrt_bias(point):
        out, ctx = L.conv2d(x, kernel, point, pad=1)
        return _weighted(out, weights), L.conv2d_backward(ctx, weights)[2]

    for f, point in ((wrt_input, x), (wrt_kernel, kernel), (wrt_bias, bias)):
        report = grad_check(f, point, h=1e-3, tol=1e-2)
        assert report.passed, report


def test_strided_conv2d_gradient(rng):
    x = rng.normal(size=(1, 2, 7, 7)).astype(np.float32)
    kernel = rng.normal(size=(2, 2, 3, 3)).astype(np.float32)
    bias = np.zeros(2, np.float32)
    weights = _upstream(rng, (1, 2, 3, 3))

    def f(point):
        out, ctx = L.conv2d(point, kernel, bias, stride=2)
        return _weighted(out, weights), L.conv2d_backward(ctx, weights)[0]

    assert grad_check(f, x).passed


@pytest.mark.parametrize("seed", range(5))
def test_relu_gradient(seed):
    rng = np.random.default_rng(seed)
    # keep inputs away from the kink
    x = (rng.choice([-1.0, 1.0], size=(3, 8)) * rng.uniform(0.1, 1.0, size=(3, 8))).astype(np.float32)
    weights = _upstream(rng, (3, 8))

    def f(point):
        out, ctx = L.relu(point)
        return _weighted(out, weights), L.relu_backward(ctx, weights)

    assert grad_check(f, x).passed


def test_relu_subgradient_at_zero_is_zero():
    out, ctx = L.relu(np.array([[-1.0, 0.0, 2.0]]))
    assert_array_equal(out, [[0.0, 0.0, 2.0]])
    assert_array_equal(L.relu_backward(ctx, np.ones((1, 3))), [[0.0, 0.0, 1.0]])


@pytest.mark.parametrize("seed", range(5))
def test_maxpool2_gradient(seed):
    rng = np.random.default_rng(seed)
    # distinct values spaced well beyond the difference step
    x = (rng.permutation(2 * 2 * 4 * 4).reshape(2, 2, 4, 4) * 0.01).astype(np.float32)
    weights = _upstream(rng, (2, 2, 2, 2))

    def f(point):
        out, ctx = L.maxpool2(point)
        return _weighted(out, weights), L.maxpool2_backward(ctx, weights)

    assert grad_check(f, x).passed


def test_maxpool2_ties_route_to_first_in_row_major_order():
    x = np.ones((1, 1, 2, 2), dtype=np.float32)
    out, ctx = L.maxpool2(x)
    assert_array_equal(out, [[[[1.0]]]])
    assert_array_equal(L.maxpool2_backward(ctx, np.full((1, 1, 1, 1), 5.0)), [[[[5.0, 0.0], [0.0, 0.0]]]])


def test_maxpool2_rejects_odd_dims():
    with pytest.raises(ShapeError):
        L.maxpool2(np.ones((1, 1, 3, 4)))


@pytest.mark.parametrize("seed", range(5))
def test_dense_gradients(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(4, 6)).astype(np.float32)
    w = rng.normal(size=(6, 3)).astype(np.float32)
    b = rng.normal(size=3).astype(np.float32)
    weights = _upstream(rng, (4, 3))

    def wrt_input(point):
        out, ctx = L.dense(point, w, b)
        return _weighted(out, weights), L.dense_backward(ctx, weights)[0]

    def wrt_weights(point):
        out, ctx = L.dense(x, point, b)
        return _weighted(out, weights), L.dense_backward(ctx, weights)[1]

    for f, point in ((wrt_input, x), (wrt_weights, w)):
        assert grad_check(f, point).passed


def test_flatten_round_trips_shape(rng):
    x = rng.normal(size=(2, 3, 4, 4)).astype(np.float32)
    out, ctx = L.flatten(x)
    assert out.shape == (2, 48)
    assert_array_equal(L.flatten_backward(ctx, out), x)


@pytest.mark.parametrize("seed", range(5))
def test_softmax_xent_gradient(seed):
    rng = np.random.default_rng(seed)
    logits = rng.normal(size=(5, 7)).astype(np.float32)
    labels = rng.integers(0, 7, size=5)

    def f(point):
        loss, _, d_logits = L.softmax_xent(point, labels)
        return loss, d_logits

    assert grad_check(f, logits).passed


def test_softmax_xent_values():
    logits = np.array([[2.0, 0.0, -1.0], [0.0, 0.0, 0.0]], dtype=np.float32)
    loss, probs, d_logits = L.softmax_xent(logits, [0, 2])
    assert loss >= 0.0
    assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)
    onehot = np.array([[1, 0, 0], [0, 0, 1]], dtype=np.float64)
    assert_allclose(d_logits, (probs - onehot) / 2, atol=1e-6)
    assert_allclose(probs[1], [1 / 3] * 3, atol=1e-6)


def test_softmax_xent_rejects_bad_labels():
    with pytest.raises(LabelError):
        L.softmax_xent(np.zeros((2, 3)), [0, 3])


def test_softmax_of_descending_logits():
    assert_allclose(L.softmax(np.array([[2.0, 1.0, 0.0, -1.0]])), [[0.6439, 0.2369, 0.0871, 0.0321]], atol=1e-4)


def test_softmax_xent_extremes():
    loss, probs, _ = L.softmax_xent(np.full((1, 4), 3.5, dtype=np.float32), [2])
    assert loss == pytest.approx(np.log(4.0), rel=1e-6)
    assert_allclose(probs, 0.25, atol=1e-7)
    loss, _, _ = L.softmax_xent(np.array([[30.0, 0.0, 0.0, 0.0]], dtype=np.float32), [0])
    assert 0.0 <= loss < 1e-9


def test_conv2d_bias_gradient_sums_upstream(rng):
    x = rng.normal(size=(1, 1, 3, 3)).astype(np.float32)
    kernel = rng.normal(size=(1, 1, 2, 2)).astype(np.float32)
    out, ctx = L.conv2d(x, kernel, np.zeros(1, np.float32))
    assert out.shape == (1, 1, 2, 2)
    _, _, d_bias = L.conv2d_backward(ctx, np.ones((1, 1, 2, 2), dtype=np.float32))
    assert_array_equal(d_bias, [4.0])
    with pytest.raises(ShapeError):
        L.softmax_xent(np.zeros((2, 3)), [0])


def test_context_is_single_use():
    out, ctx = L.relu(np.ones((1, 2)))
    L.relu_backward(ctx, out)
    with pytest.raises(StaleContextError):
        L.relu_backward(ctx, out)


def test_context_rejects_other_layer_kind():
    out, ctx = L.relu(np.ones((1, 2)))
    with pytest.raises(StaleContextError):
        L.flatten_backward(ctx, out)


def test_backward_rejects_wrong_upstream_shape():
    _, ctx = L.relu(np.ones((1, 2)))
    with pytest.raises(ShapeError):
        L.relu_backward(ctx, np.ones((2, 2)))


def test_as_tensor_validation():
    with pytest.raises(ShapeError):
        as_tensor(np.zeros((1, 1, 1, 1, 1)))
    with pytest.raises(NumericalError):
        as_tensor([1.0, np.nan])
    assert as_tensor([[1, 2]]).dtype == np.float32


def test_as_labels_rejects_out_of_range():
    with pytest.raises(LabelError):
        as_labels([0, 5], 2, 5)
    assert_array_equal(as_labels([1, 4], 2, 5), [1, 4])


def test_grad_check_flags_a_wrong_gradient(rng):
    x = rng.normal(size=5).astype(np.float32)

    def f(point):
        return float(np.sum(point.astype(np.float64) ** 2)), 3.0 * point

    report = grad_check(f, x)
    assert not report.passed
    assert report.rel_error > 0.1


def test_relative_error_is_zero_for_vanishing_gradients():
    assert relative_error(np.zeros(3), np.zeros(3)) == 0.0


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(20))
def test_layer_gradients_over_many_seeds(seed):
    rng = np.random.default_rng(100 + seed)
    x = rng.normal(size=(2, 2, 4, 4)).astype(np.float32)
    kernel = rng.normal(size=(2, 2, 3, 3)).astype(np.float32)
    bias = rng.normal(size=2).astype(np.float32)
    weights = _upstream(rng, (2, 2, 4, 4))

    def f(point):
        out, ctx = L.conv2d(point, kernel, bias, pad=1)
        return _weighted(out, weights), L.conv2d_backward(ctx, weights)[0]

    assert grad_check(f, x).passed
