"""Procedural MNIST-style digits for offline training and tests.

Each digit is a seven-segment glyph drawn with anti-aliased strokes under a
random shift, scale, slant and stroke width, plus mild pixel noise. Pixels
are quantized to 8 bits so the corpus survives an IDX round trip exactly.
"""
from pathlib import Path

import numpy as np

from data.datasets import Dataset
from data.loaders import write_idx
from utils.seeding import make_rng

DIGIT_NAMES = ("zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine")

# segment endpoints in a 1 x 2 glyph box, y pointing down
_SEGMENTS = {
    "a": ((0.0, 0.0), (1.0, 0.0)),
    "b": ((1.0, 0.0), (1.0, 1.0)),
    "c": ((1.0, 1.0), (1.0, 2.0)),
    "d": ((0.0, 2.0), (1.0, 2.0)),
    "e": ((0.0, 1.0), (0.0, 2.0)),
    "f": ((0.0, 0.0), (0.0, 1.0)),
    "g": ((0.0, 1.0), (1.0, 1.0)),
}
_DIGITS = ("abcdef", "bc", "abged", "abgcd", "fgbc", "afgcd", "afgedc", "abc", "abcdefg", "abcdfg")


def _render(digit, size, rng):
    height = size * rng.uniform(0.55, 0.7)
    width = height * rng.uniform(0.42, 0.55)
    cx = size / 2 + rng.uniform(-0.1, 0.1) * size
    cy = size / 2 + rng.uniform(-0.08, 0.08) * size
    slant = rng.uniform(-0.25, 0.25)
    half_stroke = rng.uniform(0.9, 1.6) * size / 28

    segments = np.array([_SEGMENTS[s] for s in _DIGITS[digit]], dtype=np.float64)
    gx, gy = segments[..., 0], segments[..., 1]
    py = cy + (gy - 1.0) * height / 2
    px = cx + (gx - 0.5) * width - slant * (py - cy)
    starts = np.stack([px[:, 0], py[:, 0]], axis=-1)
    ends = np.stack([px[:, 1], py[:, 1]], axis=-1)

    ys, xs = np.mgrid[0:size, 0:size] + 0.5
    points = np.stack([xs.ravel(), ys.ravel()], axis=-1)[:, None, :]
    direction = ends - starts
    t = ((points - starts) * direction).sum(-1) / (direction * direction).sum(-1)
    nearest = starts + np.clip(t, 0.0, 1.0)[..., None] * direction
    distance = np.linalg.norm(points - nearest, axis=-1).min(axis=1)
    return np.clip(half_stroke + 0.5 - distance, 0.0, 1.0).reshape(size, size)


def make_digit_pixels(count, seed, size=28, noise=0.04):
    """uint8 pixels (count, size, size) and balanced labels (count,)."""
    rng = make_rng(seed, "synthetic")
    labels = rng.permutation(np.arange(count) % 10)
    pixels = np.empty((count, size, size), dtype=np.uint8)
    for i, digit in enumerate(labels):
        glyph = _render(int(digit), size, rng)
        glyph = np.clip(glyph + rng.normal(0.0, noise, glyph.shape), 0.0, 1.0)
        pixels[i] = np.round(glyph * 255.0).astype(np.uint8)
    return pixels, labels.astype(np.int64)


def make_digits(count, seed, size=28, noise=0.04):
    pixels, labels = make_digit_pixels(count, seed, size, noise)
    images = pixels[:, None].astype(np.float32) / np.float32(255.0)
    return Dataset(images, labels, DIGIT_NAMES, source=f"synthetic-digits:{seed}")


def write_digits_idx(directory, count, seed, size=28, prefix="digits"):
    """Write a synthetic corpus as an IDX pair plus class_names.txt; returns the paths."""
    directory = Path(directory)
    pixels, labels = make_digit_pixels(count, seed, size)
    images_path = directory / f"{prefix}-images-idx3-ubyte"
    labels_path = directory / f"{prefix}-labels-idx1-ubyte"
    write_idx(images_path, labels_path, pixels, labels)
    names_path = directory / "class_names.txt"
    names_path.write_text("\n".join(DIGIT_NAMES) + "\n", encoding="utf-8")
    return images_path, labels_path, names_path
