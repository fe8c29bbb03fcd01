from typing import TypeAlias

import numpy as np
import numpy.typing as npt

from utils.errors import LabelError, NumericalError, ShapeError

DTYPE = np.float32
MAX_RANK = 4

Tensor: TypeAlias = npt.NDArray[np.float32]


def as_tensor(data, name="tensor", rank=None):
    """Validate and convert data into a contiguous float32 array.

    Shapes have at most four positive dimensions and every element is finite.
    """
    array = np.ascontiguousarray(data, dtype=DTYPE)
    if array.ndim > MAX_RANK:
        raise ShapeError(f"{name} has rank {array.ndim}, at most {MAX_RANK} allowed", actual=array.shape)
    if rank is not None and array.ndim != rank:
        raise ShapeError(f"{name} must have rank {rank}", actual=array.shape)
    if any(dim <= 0 for dim in array.shape):
        raise ShapeError(f"{name} has an empty dimension", actual=array.shape)
    ensure_finite(array, name)
    return array


def ensure_finite(array, name="tensor"):
    if not np.isfinite(array).all():
        raise NumericalError(f"{name} contains NaN or Inf")
    return array


def as_labels(labels, count, num_classes):
    """Class-index vector of length count, every entry in [0, num_classes)."""
    array = np.atleast_1d(np.asarray(labels))
    if array.ndim != 1 or array.shape[0] != count:
        raise ShapeError("labels must be a vector with one entry per example", expected=(count,), actual=array.shape)
    if not np.issubdtype(array.dtype, np.integer):
        if not np.all(np.equal(np.mod(array, 1), 0)):
            raise LabelError(array.tolist(), num_classes)
    array = array.astype(np.int64)
    bad = (array < 0) | (array >= num_classes)
    if bad.any():
        raise LabelError(int(array[bad][0]), num_classes)
    return array
