import logging

import numpy as np

from attacks.fgsm import perturb, raw_input_gradient
from attacks.types import FgsmConfig, SweepRow, SweepTable
from models.victim import topk_hits
from utils.errors import ConfigError, EmptyDatasetError
from utils.parallel import chunk_slices, ordered_map

logger = logging.getLogger(__name__)


def _check_eps_list(eps_list):
    eps_list = [float(eps) for eps in eps_list]
    if not eps_list:
        raise ConfigError("eps_list is empty")
    if any(b <= a for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigError(f"eps_list must be strictly ascending, got {eps_list}")
    for eps in eps_list:
        FgsmConfig(eps)
    return eps_list


def epsilon_sweep(model, dataset, eps_list, threads=1, model_id="", dataset_id=""):
    """Top-1/top-5 error after FGSM at each epsilon, attacking every image with its true label.

    The gradient sign of each image does not depend on epsilon, so it is
    computed once per image and reused across the whole sweep.
    """
    eps_list = _check_eps_list(eps_list)
    if len(dataset) == 0:
        raise EmptyDatasetError("cannot sweep an empty dataset")
    configs = [FgsmConfig(eps) for eps in eps_list]

    def misses_for(chunk):
        images = dataset.images[chunk]
        labels = dataset.labels[chunk]
        _, _, grad = raw_input_gradient(model, images, labels)
        counts = np.zeros((len(configs), 2), dtype=np.int64)
        for row, config in enumerate(configs):
            top1, top5 = topk_hits(model, perturb(images, grad, config), labels, (1, 5))
            counts[row] = (~top1).sum(), (~top5).sum()
        return counts

    total = sum(ordered_map(misses_for, chunk_slices(len(dataset)), threads))
    count = len(dataset)
    rows = []
    for eps, (miss1, miss5) in zip(eps_list, total):
        row = SweepRow(eps, 100.0 * int(miss1) / count, 100.0 * int(miss5) / count)
        logger.info("eps %.4f: top-1 error %.2f%%, top-5 error %.2f%%", eps, row.top1_error, row.top5_error)
        rows.append(row)
    return SweepTable(tuple(rows), model_id=model_id, dataset_id=dataset_id or dataset.source)


def saturation_point(table, tolerance=2.0):
    """Smallest epsilon after which top-1 error never rises more than tolerance points."""
    top1 = table.top1
    for index, value in enumerate(top1):
        if max(top1[index:]) - value <= tolerance:
            return table.rows[index].epsilon
    return None


def rises_until_peak(table, allowance=2.0):
    """True when top-1 error is non-decreasing (within allowance) up to its maximum."""
    top1 = table.top1
    if not top1:
        return True
    peak = int(np.argmax(top1))
    return all(b >= a - allowance for a, b in zip(top1[:peak], top1[1:peak + 1]))
