"""Forward, reverse and prediction passes of the victim network."""
import logging
from dataclasses import dataclass

import numpy as np

from data.datasets import normalize
from diffcore import layers as L
from diffcore.tensor import DTYPE, as_tensor
from models.models import Model
from utils.errors import ConfigError, ShapeError
from utils.seeding import make_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Prediction:
    class_index: int
    class_name: str
    probability: float


def build_model(spec, seed, class_names=None, normalization=None):
    """Weights ~ normal(0, 1/sqrt(fan_in)), biases zero, deterministic per seed."""
    rng = make_rng(seed, "init")
    params = {}
    for name, shape in spec.parameter_shapes().items():
        if name.endswith(".bias"):
            params[name] = np.zeros(shape, dtype=DTYPE)
        else:
            fan_in = int(np.prod(shape[1:])) if name.endswith(".kernel") else shape[0]
            params[name] = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=shape).astype(DTYPE)
    if class_names is None:
        class_names = [str(i) for i in range(spec.num_classes)]
    model = Model(spec, params, class_names, normalization)
    logger.debug("built model with %d parameters (seed %d)", model.num_parameters, seed)
    return model


def _as_batch(model, batch):
    batch = as_tensor(batch, "batch")
    if batch.ndim == 3:
        batch = batch[None]
    if batch.ndim != 4 or batch.shape[1:] != model.spec.input_shape:
        raise ShapeError("batch does not match the model input shape",
                         expected=(None, *model.spec.input_shape), actual=batch.shape)
    return batch


def forward_with_contexts(model, batch):
    x = _as_batch(model, batch)
    contexts = []
    for index, layer in enumerate(model.spec.layers):
        name = model.spec.layer_name(index)
        if layer.kind == "conv":
            x, ctx = L.conv2d(x, model.params[f"{name}.kernel"], model.params[f"{name}.bias"],
                              stride=layer.stride, pad=layer.pad)
        elif layer.kind == "relu":
            x, ctx = L.relu(x)
        elif layer.kind == "maxpool2":
            x, ctx = L.maxpool2(x)
        elif layer.kind == "flatten":
            x, ctx = L.flatten(x)
        else:
            x, ctx = L.dense(x, model.params[f"{name}.weights"], model.params[f"{name}.bias"])
        contexts.append(ctx)
    return x, contexts


def backward(model, contexts, d_logits, with_params=True):
    """Reverse pass; returns (d_input, parameter gradients keyed like model.params)."""
    grad = d_logits
    grads = {}
    for index in reversed(range(len(model.spec.layers))):
        layer = model.spec.layers[index]
        name = model.spec.layer_name(index)
        ctx = contexts[index]
        if layer.kind == "conv":
            grad, d_kernel, d_bias = L.conv2d_backward(ctx, grad)
            if with_params:
                grads[f"{name}.kernel"], grads[f"{name}.bias"] = d_kernel, d_bias
        elif layer.kind == "relu":
            grad = L.relu_backward(ctx, grad)
        elif layer.kind == "maxpool2":
            grad = L.maxpool2_backward(ctx, grad)
        elif layer.kind == "flatten":
            grad = L.flatten_backward(ctx, grad)
        else:
            grad, d_weights, d_bias = L.dense_backward(ctx, grad)
            if with_params:
                grads[f"{name}.weights"], grads[f"{name}.bias"] = d_weights, d_bias
    return grad, grads


def forward(model, batch):
    """Logits (N, num_classes) for an already-normalized batch."""
    logits, _ = forward_with_contexts(model, batch)
    return logits


def forward_raw(model, images):
    """Logits for raw [0,1] pixels, normalized with the model's training statistics."""
    return forward(model, normalize(images, model.normalization))


def loss_and_gradients(model, batch, labels):
    """(loss, probs, d_input, param grads) for the mean cross-entropy of a normalized batch."""
    logits, contexts = forward_with_contexts(model, batch)
    loss, probs, d_logits = L.softmax_xent(logits, labels)
    d_input, grads = backward(model, contexts, d_logits)
    return loss, probs, d_input, grads


def loss_and_input_gradient(model, batch, labels):
    logits, contexts = forward_with_contexts(model, batch)
    loss, probs, d_logits = L.softmax_xent(logits, labels)
    d_input, _ = backward(model, contexts, d_logits, with_params=False)
    return loss, probs, d_input


def input_gradient(model, image, label):
    """Gradient of the cross-entropy loss w.r.t. a normalized image (or batch), same shape as the input."""
    image = np.asarray(image)
    _, _, grad = loss_and_input_gradient(model, image, np.atleast_1d(label))
    return grad.reshape(image.shape)


def topk_indices(probs, k):
    """Class indices ranked by descending probability; ties go to the lower index."""
    return np.argsort(-np.asarray(probs, dtype=np.float64), axis=-1, kind="stable")[..., :k]


def check_k(model, k):
    if not 1 <= int(k) <= model.num_classes:
        raise ConfigError(f"k must lie in [1, {model.num_classes}], got {k}")
    return int(k)


def predict_topk(model, image, k):
    """Top-k (class_index, class_name, probability) for one normalized image."""
    k = check_k(model, k)
    image = np.asarray(image)
    if image.ndim == 4 and image.shape[0] != 1:
        raise ShapeError("predict_topk takes a single image", actual=image.shape)
    log_probs = L.log_softmax(forward(model, image))[0]
    return [Prediction(int(i), model.class_names[i], float(np.exp(log_probs[i])))
            for i in topk_indices(log_probs, k)]


def topk_hits(model, images, targets, ks):
    """For raw images, whether each target class is ranked within the top k, per k in ks."""
    log_probs = L.log_softmax(forward_raw(model, images))
    ks = [min(int(k), model.num_classes) for k in ks]
    order = topk_indices(log_probs, max(ks))
    targets = np.asarray(targets).reshape(-1, 1)
    return [(order[:, :k] == targets).any(axis=1) for k in ks]
