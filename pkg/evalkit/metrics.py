"""Clean-accuracy metrics and per-image confidence breakdowns."""
import logging
from dataclasses import dataclass

import numpy as np

from data.datasets import normalize
from models.victim import check_k, predict_topk, topk_hits
from utils.errors import EmptyDatasetError, LabelError, ReportError
from utils.parallel import chunk_slices, ordered_map

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvalReport:
    dataset_id: str
    model_id: str
    top1_error: float
    top5_error: float
    num_images: int

    def __post_init__(self):
        for name in ("top1_error", "top5_error"):
            value = getattr(self, name)
            if not 0.0 <= value <= 100.0:
                raise ReportError(f"{name} = {value} outside [0, 100]")
        if self.top1_error < self.top5_error:
            raise ReportError(f"top-1 error {self.top1_error} below top-5 error {self.top5_error}")


@dataclass(frozen=True)
class ConfidenceBreakdown:
    """Top-k (class_name, confidence) pairs for one image, most confident first."""

    image_id: str
    true_class: int
    entries: tuple
    class_indices: tuple = ()

    def __post_init__(self):
        entries = tuple((str(name), float(conf)) for name, conf in self.entries)
        confidences = [conf for _, conf in entries]
        if any(not 0.0 <= conf <= 1.0 for conf in confidences):
            raise ReportError(f"{self.image_id}: confidences must lie in [0, 1]")
        if any(b > a for a, b in zip(confidences, confidences[1:])):
            raise ReportError(f"{self.image_id}: confidences are not in descending order")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "class_indices", tuple(int(i) for i in self.class_indices))

    @property
    def top_class(self):
        return self.entries[0][0]

    @property
    def true_ranked_first(self):
        return bool(self.class_indices) and self.class_indices[0] == self.true_class


def _count_hits(model, dataset, ks, threads):
    if len(dataset) == 0:
        raise EmptyDatasetError("cannot evaluate on an empty dataset")

    def hits_for(chunk):
        hits = topk_hits(model, dataset.images[chunk], dataset.labels[chunk], ks)
        return np.array([h.sum() for h in hits], dtype=np.int64)

    return sum(ordered_map(hits_for, chunk_slices(len(dataset)), threads))


def topk_error(model, dataset, k, threads=1):
    """Percentage of images whose true label is missing from the model's top-k."""
    k = check_k(model, k)
    (hits,) = _count_hits(model, dataset, (k,), threads)
    return 100.0 * (len(dataset) - int(hits)) / len(dataset)


def evaluate(model, dataset, threads=1, model_id="", dataset_id=""):
    """Clean top-1 / top-5 errors; k=5 is capped at the number of classes."""
    hit1, hit5 = _count_hits(model, dataset, (1, 5), threads)
    count = len(dataset)
    report = EvalReport(
        dataset_id=dataset_id or dataset.source,
        model_id=model_id,
        top1_error=100.0 * (count - int(hit1)) / count,
        top5_error=100.0 * (count - int(hit5)) / count,
        num_images=count,
    )
    logger.info("%s on %s: top-1 error %.2f%%, top-5 error %.2f%% (%d images)",
                report.model_id or "model", report.dataset_id, report.top1_error, report.top5_error, count)
    return report


def compare_models(models, dataset, threads=1, model_ids=None):
    """One EvalReport per model on the same dataset, in the given order."""
    model_ids = list(model_ids) if model_ids is not None else [f"model{i}" for i in range(len(models))]
    if len(model_ids) != len(models):
        raise ReportError(f"{len(models)} models but {len(model_ids)} model ids")
    return [evaluate(model, dataset, threads, model_id=model_id) for model, model_id in zip(models, model_ids)]


def confidence_breakdown(model, image, true_class, k=5, image_id=""):
    """Top-k softmax confidences for one raw [0,1] image."""
    if not 0 <= int(true_class) < model.num_classes:
        raise LabelError(true_class, model.num_classes)
    predictions = predict_topk(model, normalize(image, model.normalization), k)
    return ConfidenceBreakdown(
        image_id=str(image_id),
        true_class=int(true_class),
        entries=tuple((p.class_name, p.probability) for p in predictions),
        class_indices=tuple(p.class_index for p in predictions),
    )
