"""Fast gradient sign attack: adv = clamp(x + eps * sign(grad_x J), 0, 1).

The loss is differentiated w.r.t. the normalized input the network sees;
the chain rule through ``(x - mean) / std`` maps it back to raw pixels,
where eps is applied.
"""
import numpy as np

from data.datasets import normalize
from diffcore.tensor import DTYPE, as_tensor
from models.victim import loss_and_input_gradient


def raw_input_gradient(model, images, labels):
    """Loss gradient w.r.t. raw [0,1] pixels, plus the loss and softmax probabilities."""
    images = as_tensor(images, "images")
    batch = images if images.ndim == 4 else images[None]
    loss, probs, grad = loss_and_input_gradient(model, normalize(batch, model.normalization), np.atleast_1d(labels))
    std = np.asarray(model.normalization.std, dtype=DTYPE).reshape(1, -1, 1, 1)
    return loss, probs, (grad / std).astype(DTYPE).reshape(images.shape)


def perturb(images, raw_gradient, config):
    """One signed step of size epsilon in raw pixel space; sign(0) = 0."""
    images = np.asarray(images, dtype=DTYPE)
    if config.epsilon == 0:
        return images.copy()
    step = DTYPE(config.epsilon) * np.sign(raw_gradient).astype(DTYPE)
    return np.clip(images + step, DTYPE(config.clamp_lo), DTYPE(config.clamp_hi)).astype(DTYPE)


def fgsm(model, image, label, config):
    """Untargeted FGSM on raw pixels, pushing the true-label loss up."""
    _, _, grad = raw_input_gradient(model, image, label)
    return perturb(image, grad, config)
