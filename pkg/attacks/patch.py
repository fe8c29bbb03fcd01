"""Adversarial patches: training, pasting, evaluation and the patch file format.

A patch is trained by gradient ascent on the mean log-probability of its
target class, with a fresh random placement for every image at every step
so that it works wherever it is pasted. The default "sign" rule moves every
pixel by a fixed step in the direction of its gradient; "gradient" moves it by
the learning rate times the raw gradient, whose scale depends on the victim.
"""
import logging
from dataclasses import replace

import numpy as np

from attacks.fgsm import raw_input_gradient
from attacks.types import Patch, PatchReport, PatchResult
from diffcore.tensor import DTYPE
from models.victim import topk_hits
from utils.errors import ConfigError, CorruptHeaderError, EmptyDatasetError, LabelError, PlacementError, ShapeError
from utils.io_utils import read_container, write_container
from utils.parallel import chunk_slices, ordered_map
from utils.seeding import make_rng

logger = logging.getLogger(__name__)

PATCH_MAGIC = b"GSTP1\n"

# covered fraction of a 224x224 image by 32, 48 and 64 pixel patches
REFERENCE_COVERAGE = tuple((side / 224.0) ** 2 for side in (32, 48, 64))

def default_patch_sizes(height, width, coverages=REFERENCE_COVERAGE):
    """Odd side lengths whose area fraction is nearest each reference coverage."""
    area = float(height * width)
    candidates = list(range(1, min(height, width) + 1, 2))
    return [min(candidates, key=lambda s: (abs(s * s / area - fraction), s)) for fraction in coverages]


def random_patch(size, channels, target_class, seed, name="control"):
    """Untrained uniform-noise patch, the control against which trained patches are judged."""
    pixels = make_rng(seed, "patch-init").uniform(0.0, 1.0, size=(channels, size, size)).astype(DTYPE)
    return Patch(pixels, target_class, name=name, steps=0, seed=seed, source="random")


def _check_fits(patch_size, image_hw):
    if patch_size > image_hw[0] or patch_size > image_hw[1]:
        raise ConfigError(f"patch size {patch_size} exceeds image size {tuple(image_hw)}")


def _check_target(target_class, num_classes):
    if not 0 <= int(target_class) < num_classes:
        raise LabelError(target_class, num_classes)


def sample_placements(rng, count, image_hw, size, policy="random"):
    """Top-left (rows, cols) arrays for count images, all fully inside the image."""
    max_row, max_col = image_hw[0] - size, image_hw[1] - size
    if policy == "random":
        return rng.integers(0, max_row + 1, size=count), rng.integers(0, max_col + 1, size=count)
    if policy == "center":
        return np.full(count, max_row // 2), np.full(count, max_col // 2)
    return np.zeros(count, dtype=np.int64), np.zeros(count, dtype=np.int64)


def apply_patch(image, patch, top_left):
    """Paste patch at top_left = (row, col) on an image (C,H,W) or batch (N,C,H,W)."""
    image = np.asarray(image, dtype=DTYPE)
    if image.ndim not in (3, 4) or image.shape[-3] != patch.channels:
        raise ShapeError("patch channels differ from image channels",
                         expected=(patch.channels,), actual=image.shape)
    row, col = (int(v) for v in top_left)
    height, width = image.shape[-2:]
    if row < 0 or col < 0 or row + patch.size > height or col + patch.size > width:
        raise PlacementError((row, col), patch.size, (height, width))
    out = image.copy()
    out[..., row:row + patch.size, col:col + patch.size] = patch.pixels
    return out


def _paste_each(images, pixels, rows, cols):
    size = pixels.shape[-1]
    out = np.array(images, dtype=DTYPE)
    for i, (row, col) in enumerate(zip(rows, cols)):
        out[i, :, row:row + size, col:col + size] = pixels
    return out


def _region_sum(grad, rows, cols, size):
    total = np.zeros(grad.shape[1:2] + (size, size), dtype=np.float64)
    for i, (row, col) in enumerate(zip(rows, cols)):
        total += grad[i, :, row:row + size, col:col + size]
    return total


def train_patch(model, train_set, config):
    """Ascent on mean log p(target) over random placements; pixels clamped to [0,1] each step."""
    if len(train_set) == 0:
        raise EmptyDatasetError("cannot train a patch on an empty dataset")
    _check_target(config.target_class, model.num_classes)
    channels, height, width = train_set.image_shape
    _check_fits(config.size, (height, width))

    pixels = make_rng(config.seed, "patch-init").uniform(0.0, 1.0, size=(channels, config.size, config.size))
    pixels = pixels.astype(DTYPE)
    rng = make_rng(config.seed, "patch-train")
    targets = np.full(config.batch_size, config.target_class, dtype=np.int64)
    objective = []

    for step in range(config.steps):
        idx = rng.integers(0, len(train_set), size=config.batch_size)
        rows, cols = sample_placements(rng, config.batch_size, (height, width), config.size, config.placement_policy)
        patched = _paste_each(train_set.images[idx], pixels, rows, cols)
        loss, _, grad = raw_input_gradient(model, patched, targets)
        # d(mean log p)/d patch = -d(loss)/d patch, summed over every pasted copy
        ascent = -_region_sum(grad, rows, cols, config.size)
        if config.step_rule == "sign":
            ascent = np.sign(ascent)
        pixels = np.clip(pixels + config.learning_rate * ascent, 0.0, 1.0).astype(DTYPE)
        objective.append(-loss)
        if (step + 1) % 50 == 0 or step + 1 == config.steps:
            logger.info("patch size %d target %d step %d/%d: mean log p(target) %.4f",
                        config.size, config.target_class, step + 1, config.steps, -loss)

    name = config.name or f"{model.class_names[config.target_class]}-{config.size}"
    return Patch(pixels, config.target_class, name=name, steps=config.steps,
                 seed=config.seed, source=train_set.source, objective=tuple(objective))


def check_patch(patch, num_classes, image_shape):
    """ConfigError unless the patch targets one of num_classes and fits (C, H, W) images."""
    if not 0 <= int(patch.target_class) < num_classes:
        raise ConfigError(f"patch {patch.name} targets class {patch.target_class}, model has {num_classes} classes")
    if patch.channels != image_shape[0]:
        raise ConfigError(f"patch {patch.name} has {patch.channels} channels, images have {image_shape[0]}")
    _check_fits(patch.size, image_shape[1:])


def _eval_placements(dataset, patch, seed):
    channels, height, width = dataset.image_shape
    if channels != patch.channels:
        raise ShapeError("patch channels differ from image channels",
                         expected=(channels,), actual=(patch.channels,))
    _check_fits(patch.size, (height, width))
    return sample_placements(make_rng(seed, "patch-eval"), len(dataset), (height, width), patch.size)


def patch_eval(model, dataset, patch, seed, threads=1):
    """Paste the patch at one seeded random placement per image and score target-class success."""
    if len(dataset) == 0:
        raise EmptyDatasetError("cannot evaluate a patch on an empty dataset")
    _check_target(patch.target_class, model.num_classes)
    rows, cols = _eval_placements(dataset, patch, seed)

    def hits_for(chunk):
        patched = _paste_each(dataset.images[chunk], patch.pixels, rows[chunk], cols[chunk])
        targets = np.full(patched.shape[0], patch.target_class)
        top1, top5 = topk_hits(model, patched, targets, (1, 5))
        return np.array([top1.sum(), top5.sum()], dtype=np.int64)

    hit1, hit5 = sum(ordered_map(hits_for, chunk_slices(len(dataset)), threads))
    count = len(dataset)
    result = PatchResult(patch.name, patch.size, 100.0 * int(hit1) / count, 100.0 * int(hit5) / count)
    logger.info("patch %s (size %d): top-1 success %.2f%%, top-5 success %.2f%%",
                result.patch, result.size, result.top1_success, result.top5_success)
    return result


def patched_examples(dataset, patch, seed, count):
    """The first count images with the patch at the placements patch_eval uses for them."""
    if len(dataset) == 0:
        raise EmptyDatasetError("cannot paste a patch on an empty dataset")
    rows, cols = _eval_placements(dataset, patch, seed)
    count = min(int(count), len(dataset))
    return _paste_each(dataset.images[:count], patch.pixels, rows[:count], cols[:count])


def patch_grid(model, train_set, eval_set, targets, sizes, base_config, eval_seed, threads=1):
    """Train one patch per (target, size) and evaluate it; rows follow targets, then sizes."""
    patches, rows = [], []
    for target in targets:
        label = model.class_names[int(target)] if 0 <= int(target) < model.num_classes else str(target)
        for size in sizes:
            config = replace(base_config, size=size, target_class=int(target), name=label)
            patch = train_patch(model, train_set, config)
            patches.append(patch)
            rows.append(patch_eval(model, eval_set, patch, eval_seed, threads))
    return PatchReport(tuple(rows), dataset_id=eval_set.source), patches


def save_patch(patch, path):
    meta = {
        "kind": "patch",
        "name": patch.name,
        "target_class": int(patch.target_class),
        "size": patch.size,
        "steps": int(patch.steps),
        "seed": int(patch.seed),
        "source": patch.source,
    }
    tensors = {"pixels": patch.pixels}
    if patch.objective:
        tensors["objective"] = np.asarray(patch.objective, dtype=DTYPE)
    write_container(path, PATCH_MAGIC, meta, tensors)
    logger.info("saved patch %s to %s", patch.name, path)
    return path


def load_patch(path):
    meta, tensors = read_container(path, PATCH_MAGIC)
    try:
        if meta.get("kind") != "patch":
            raise CorruptHeaderError(f"container holds a {meta.get('kind')!r}, not a patch", path)
        patch = Patch(
            tensors["pixels"], int(meta["target_class"]), name=meta["name"], steps=int(meta["steps"]),
            seed=int(meta["seed"]), source=meta["source"], objective=tuple(tensors.get("objective", ())),
        )
        if patch.size != int(meta["size"]):
            raise CorruptHeaderError(f"pixels are {patch.size} wide, header says {meta['size']}", path)
    except CorruptHeaderError:
        raise
    except (KeyError, TypeError, ValueError, AttributeError, ConfigError) as exc:
        raise CorruptHeaderError(f"header does not describe a valid patch: {exc}", path) from exc
    return patch
