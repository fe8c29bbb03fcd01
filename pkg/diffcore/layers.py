"""Differentiable layer primitives.

Every op returns its output together with a LayerContext; the matching
``*_backward`` consumes that context exactly once and returns the gradient
with respect to the layer input (and parameters, where the layer has any).
Convolution is cross-correlation with zero padding, lowered to a matrix
product through an im2col view.
"""
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from diffcore.tensor import DTYPE, as_labels, as_tensor, ensure_finite
from utils.errors import ShapeError, StaleContextError


@dataclass
class LayerContext:
    kind: str
    output_shape: tuple
    saved: dict = field(default_factory=dict)
    consumed: bool = False

    def take(self, kind, upstream):
        if self.kind != kind:
            raise StaleContextError(f"context from a {self.kind} layer passed to {kind}_backward")
        if self.consumed:
            raise StaleContextError(f"{kind} context already consumed by a backward pass")
        upstream = np.asarray(upstream, dtype=DTYPE)
        if upstream.shape != self.output_shape:
            raise ShapeError(f"{kind}_backward upstream does not match forward output",
                             expected=self.output_shape, actual=upstream.shape)
        self.consumed = True
        return upstream


def _conv_output_size(size, kernel, stride, pad, input_shape, kernel_shape):
    span = size + 2 * pad - kernel
    if span < 0 or span % stride != 0:
        raise ShapeError(
            f"conv2d kernel {tuple(kernel_shape)} with stride {stride}, pad {pad} "
            f"does not tile input {tuple(input_shape)}"
        )
    return span // stride + 1


def _im2col(padded, kh, kw, stride):
    """(N,C,Hp,Wp) -> (N*Ho*Wo, C*kh*kw) rows, one per output position."""
    windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    n, c, ho, wo = windows.shape[:4]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    return np.ascontiguousarray(cols), ho, wo


def conv2d(x, kernel, bias, stride=1, pad=0):
    x = as_tensor(x, "conv2d input", rank=4)
    kernel = as_tensor(kernel, "conv2d kernel", rank=4)
    bias = as_tensor(bias, "conv2d bias", rank=1)
    if stride < 1 or pad < 0:
        raise ShapeError(f"conv2d needs stride >= 1 and pad >= 0, got stride={stride}, pad={pad}")
    n, cin, h, w = x.shape
    cout, kcin, kh, kw = kernel.shape
    if kcin != cin:
        raise ShapeError("conv2d kernel input channels differ from input channels",
                         expected=x.shape, actual=kernel.shape)
    if bias.shape != (cout,):
        raise ShapeError("conv2d bias must have one entry per output channel",
                         expected=(cout,), actual=bias.shape)
    ho = _conv_output_size(h, kh, stride, pad, x.shape, kernel.shape)
    wo = _conv_output_size(w, kw, stride, pad, x.shape, kernel.shape)

    padded = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols, _, _ = _im2col(padded, kh, kw, stride)
    out = cols @ kernel.reshape(cout, -1).T + bias
    out = np.ascontiguousarray(out.reshape(n, ho, wo, cout).transpose(0, 3, 1, 2), dtype=DTYPE)
    ensure_finite(out, "conv2d output")
    ctx = LayerContext("conv2d", out.shape, {
        "cols": cols, "kernel": kernel, "input_shape": x.shape,
        "stride": stride, "pad": pad,
    })
    return out, ctx


def conv2d_backward(ctx, upstream):
    upstream = ctx.take("conv2d", upstream)
    cols = ctx.saved["cols"]
    kernel = ctx.saved["kernel"]
    stride, pad = ctx.saved["stride"], ctx.saved["pad"]
    n, cin, h, w = ctx.saved["input_shape"]
    cout, _, kh, kw = kernel.shape
    _, _, ho, wo = upstream.shape

    flat = upstream.transpose(0, 2, 3, 1).reshape(-1, cout)
    d_kernel = (flat.T @ cols).reshape(kernel.shape).astype(DTYPE)
    d_bias = flat.sum(axis=0, dtype=DTYPE)

    d_cols = (flat @ kernel.reshape(cout, -1)).reshape(n, ho, wo, cin, kh, kw)
    d_padded = np.zeros((n, cin, h + 2 * pad, w + 2 * pad), dtype=DTYPE)
    for i in range(kh):
        for j in range(kw):
            d_padded[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += \
                d_cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    d_input = d_padded[:, :, pad:pad + h, pad:pad + w] if pad else d_padded
    return np.ascontiguousarray(d_input), d_kernel, d_bias


def relu(x):
    x = as_tensor(x, "relu input")
    mask = x > 0
    out = np.where(mask, x, DTYPE(0)).astype(DTYPE)
    return out, LayerContext("relu", out.shape, {"mask": mask})


def relu_backward(ctx, upstream):
    upstream = ctx.take("relu", upstream)
    # subgradient at exactly 0 is 0
    return np.where(ctx.saved["mask"], upstream, DTYPE(0)).astype(DTYPE)


def maxpool2(x):
    x = as_tensor(x, "maxpool2 input", rank=4)
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError("maxpool2 needs even height and width", actual=x.shape)
    windows = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    # argmax returns the first maximum, i.e. ties go to the first element in row-major order
    argmax = windows.argmax(axis=-1)
    out = np.ascontiguousarray(np.take_along_axis(windows, argmax[..., None], axis=-1)[..., 0])
    return out, LayerContext("maxpool2", out.shape, {"argmax": argmax, "input_shape": x.shape})


def maxpool2_backward(ctx, upstream):
    upstream = ctx.take("maxpool2", upstream)
    n, c, h, w = ctx.saved["input_shape"]
    routed = np.zeros((n, c, h // 2, w // 2, 4), dtype=DTYPE)
    np.put_along_axis(routed, ctx.saved["argmax"][..., None], upstream[..., None], axis=-1)
    d_input = routed.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
    return np.ascontiguousarray(d_input)


def flatten(x):
    x = as_tensor(x, "flatten input")
    out = x.reshape(x.shape[0], -1)
    return out, LayerContext("flatten", out.shape, {"input_shape": x.shape})


def flatten_backward(ctx, upstream):
    upstream = ctx.take("flatten", upstream)
    return upstream.reshape(ctx.saved["input_shape"])


def dense(x, weights, bias):
    x = as_tensor(x, "dense input", rank=2)
    weights = as_tensor(weights, "dense weights", rank=2)
    bias = as_tensor(bias, "dense bias", rank=1)
    if x.shape[1] != weights.shape[0]:
        raise ShapeError("dense input features differ from weight rows", expected=x.shape, actual=weights.shape)
    if bias.shape != (weights.shape[1],):
        raise ShapeError("dense bias must have one entry per output unit",
                         expected=(weights.shape[1],), actual=bias.shape)
    out = (x @ weights + bias).astype(DTYPE)
    ensure_finite(out, "dense output")
    return out, LayerContext("dense", out.shape, {"input": x, "weights": weights})


def dense_backward(ctx, upstream):
    upstream = ctx.take("dense", upstream)
    x, weights = ctx.saved["input"], ctx.saved["weights"]
    d_input = (upstream @ weights.T).astype(DTYPE)
    d_weights = (x.T @ upstream).astype(DTYPE)
    d_bias = upstream.sum(axis=0, dtype=DTYPE)
    return d_input, d_weights, d_bias


def log_softmax(logits):
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits):
    return np.exp(log_softmax(logits)).astype(DTYPE)


def softmax_xent(logits, labels):
    """Mean negative log-likelihood of labels under softmax(logits).

    Returns (loss, probs, d_logits) with d_logits = (probs - onehot) / N.
    Reductions run in float64 so the scalar loss is stable under small
    input perturbations.
    """
    logits = as_tensor(logits, "logits", rank=2)
    n, k = logits.shape
    labels = as_labels(labels, n, k)
    log_probs = log_softmax(logits)
    picked = log_probs[np.arange(n), labels]
    loss = max(0.0, float(-picked.mean()))
    probs64 = np.exp(log_probs)
    d_logits = probs64.copy()
    d_logits[np.arange(n), labels] -= 1.0
    d_logits /= n
    return loss, probs64.astype(DTYPE), d_logits.astype(DTYPE)
