import logging

import numpy as np

from data.datasets import normalize
from diffcore.tensor import DTYPE
from models.victim import loss_and_gradients
from utils.errors import ConfigError, EmptyDatasetError
from utils.seeding import make_rng

logger = logging.getLogger(__name__)


def sgd_step(params, grads, velocity, learning_rate, momentum):
    """v <- momentum*v + g ; p <- p - lr*v. Returns new (params, velocity) dicts."""
    lr = DTYPE(learning_rate)
    mu = DTYPE(momentum)
    new_params, new_velocity = {}, {}
    for name, value in params.items():
        v = mu * velocity.get(name, np.zeros_like(value)) + grads[name]
        new_velocity[name] = v.astype(DTYPE)
        new_params[name] = (value - lr * v).astype(DTYPE)
    return new_params, new_velocity


def train(model, train_set, config):
    """Minibatch SGD with momentum; epoch order seeded from config.seed.

    Returns the trained model and one (train_loss, train_error_percent) pair per
    epoch, where both are averaged over the minibatches of that epoch.
    """
    if len(train_set) == 0:
        raise EmptyDatasetError("training set has no images")
    if train_set.num_classes != model.num_classes:
        raise ConfigError(f"dataset has {train_set.num_classes} classes, model expects {model.num_classes}")

    inputs = normalize(train_set.images, model.normalization)
    labels = train_set.labels
    count = len(train_set)
    params = {name: value.copy() for name, value in model.params.items()}
    velocity = {}
    current = model
    history = []

    for epoch in range(config.epochs):
        order = make_rng(config.seed, "shuffle", epoch).permutation(count)
        loss_sum = 0.0
        wrong = 0
        for start in range(0, count, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, probs, _, grads = loss_and_gradients(current, inputs[idx], labels[idx])
            loss_sum += loss * len(idx)
            wrong += int((probs.argmax(axis=1) != labels[idx]).sum())
            params, velocity = sgd_step(params, grads, velocity, config.learning_rate, config.momentum)
            current = current.with_params(params)
        epoch_loss = loss_sum / count
        epoch_error = 100.0 * wrong / count
        history.append((epoch_loss, epoch_error))
        logger.info("epoch %d/%d: loss %.4f, train error %.2f%%", epoch + 1, config.epochs, epoch_loss, epoch_error)

    return model.with_params(params), history

