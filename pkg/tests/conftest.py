import numpy as np
import pytest

from data.datasets import NormalizationSpec, split
from data.synthetic import DIGIT_NAMES, make_digits
from models.models import MAXPOOL2, RELU, FLATTEN, ArchitectureSpec, TrainConfig, conv, default_spec, dense
from models.training import train
from models.victim import build_model


def tiny_spec(size=16, channels=1, num_classes=10):
    return ArchitectureSpec(
        layers=(conv(4), RELU, MAXPOOL2, FLATTEN, dense(num_classes)),
        num_classes=num_classes,
        input_shape=(channels, size, size),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def digits():
    return make_digits(240, seed=3, size=16)


@pytest.fixture(scope="session")
def tiny_model(digits):
    return build_model(tiny_spec(), seed=0, class_names=DIGIT_NAMES,
                       normalization=NormalizationSpec.from_images(digits.images))


@pytest.fixture(scope="session")
def trained_tiny(digits):
    model = build_model(tiny_spec(), seed=1, class_names=DIGIT_NAMES,
                        normalization=NormalizationSpec.from_images(digits.images))
    trained, _ = train(model, digits, TrainConfig(epochs=6, batch_size=16, learning_rate=0.01, seed=2))
    return trained


@pytest.fixture(scope="session")
def default_victim():
    """The default architecture trained on 4800 rendered digits; returns (model, train_set, test_set)."""
    corpus = make_digits(6000, seed=11)
    train_set, test_set = split(corpus, 0.2, seed=0)
    model = build_model(default_spec(), seed=0, class_names=DIGIT_NAMES,
                        normalization=NormalizationSpec.from_images(train_set.images))
    model, _ = train(model, train_set, TrainConfig())
    return model, train_set, test_set
