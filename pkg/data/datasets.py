import logging
from dataclasses import dataclass, field

import numpy as np

from diffcore.tensor import DTYPE
from utils.errors import ConfigError, EmptyDatasetError, LabelError, ShapeError
from utils.seeding import make_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NormalizationSpec:
    mean: tuple
    std: tuple

    def __post_init__(self):
        mean = tuple(float(m) for m in self.mean)
        std = tuple(float(s) for s in self.std)
        if len(mean) != len(std) or not mean:
            raise ConfigError(f"normalization needs one mean and one std per channel, got {mean} / {std}")
        if any(not np.isfinite(s) or s <= 0 for s in std):
            raise ConfigError(f"normalization std must be positive, got {std}")
        if any(not np.isfinite(m) for m in mean):
            raise ConfigError(f"normalization mean must be finite, got {mean}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @classmethod
    def identity(cls, channels):
        return cls((0.0,) * channels, (1.0,) * channels)

    @classmethod
    def from_images(cls, images):
        """Per-channel statistics of an (N,C,H,W) stack; constant channels get std 1."""
        images = np.asarray(images, dtype=np.float64)
        mean = images.mean(axis=(0, 2, 3))
        std = images.std(axis=(0, 2, 3))
        std = np.where(std > 1e-8, std, 1.0)
        return cls(tuple(mean.tolist()), tuple(std.tolist()))

    @property
    def channels(self):
        return len(self.mean)

    def _arrays(self, image):
        channels = np.shape(image)[-3] if np.ndim(image) >= 3 else None
        if channels != self.channels:
            raise ShapeError("normalization channels differ from image channels",
                             expected=(self.channels,), actual=np.shape(image))
        shape = (self.channels, 1, 1)
        return (np.asarray(self.mean, dtype=DTYPE).reshape(shape),
                np.asarray(self.std, dtype=DTYPE).reshape(shape))

    def to_dict(self):
        return {"mean": list(self.mean), "std": list(self.std)}

    @classmethod
    def from_dict(cls, payload):
        return cls(tuple(payload["mean"]), tuple(payload["std"]))


def normalize(image, spec):
    mean, std = spec._arrays(image)
    return ((np.asarray(image, dtype=DTYPE) - mean) / std).astype(DTYPE)


def denormalize(tensor, spec):
    mean, std = spec._arrays(tensor)
    return (np.asarray(tensor, dtype=DTYPE) * std + mean).astype(DTYPE)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Images in raw pixel space [0,1], shape (N,C,H,W), with integer labels."""

    images: np.ndarray
    labels: np.ndarray
    class_names: tuple
    normalization: NormalizationSpec = None
    source: str = field(default="memory", compare=False)

    def __post_init__(self):
        images = np.array(self.images, dtype=DTYPE, order="C")
        labels = np.array(self.labels, dtype=np.int64).reshape(-1)
        names = tuple(str(name) for name in self.class_names)
        if images.ndim != 4:
            raise ShapeError("dataset images must be stacked as (N,C,H,W)", actual=images.shape)
        if images.shape[0] != labels.shape[0]:
            raise ShapeError("dataset needs one label per image",
                             expected=(images.shape[0],), actual=labels.shape)
        if labels.size and (labels.min() < 0 or labels.max() >= len(names)):
            bad = labels[(labels < 0) | (labels >= len(names))][0]
            raise LabelError(int(bad), len(names))
        normalization = self.normalization or NormalizationSpec.identity(images.shape[1])
        if normalization.channels != images.shape[1]:
            raise ShapeError("normalization channels differ from image channels",
                             expected=(normalization.channels,), actual=images.shape)
        images.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_names", names)
        object.__setattr__(self, "normalization", normalization)

    def __len__(self):
        return int(self.images.shape[0])

    @property
    def num_classes(self):
        return len(self.class_names)

    @property
    def image_shape(self):
        return tuple(self.images.shape[1:])

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.images[indices], self.labels[indices], self.class_names,
                       self.normalization, self.source)

    def require_nonempty(self, what="dataset"):
        if len(self) == 0:
            raise EmptyDatasetError(f"{what} has no images")
        return self


def split(dataset, test_fraction, seed):
    """Seeded shuffle, then partition into (train, test)."""
    if not 0.0 < float(test_fraction) < 1.0:
        raise ConfigError(f"test_fraction must lie strictly between 0 and 1, got {test_fraction}")
    count = len(dataset)
    if count < 2:
        raise EmptyDatasetError(f"cannot split a dataset of {count} image(s)")
    order = make_rng(seed, "split").permutation(count)
    n_test = min(max(int(round(count * float(test_fraction))), 1), count - 1)
    test_idx, train_idx = order[:n_test], order[n_test:]
    logger.info("split %d images into %d train / %d test (seed %d)", count, len(train_idx), n_test, seed)
    return dataset.subset(train_idx), dataset.subset(test_idx)
