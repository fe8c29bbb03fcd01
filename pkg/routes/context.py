"""State shared by one CLI run: resolved config, inputs read and outputs written."""
import logging
from dataclasses import dataclass, field
from io import BytesIO
from pathlib import Path

import numpy as np
from PIL import Image
from werkzeug.utils import secure_filename

from data.datasets import split
from data.loaders import load_class_names, load_idx, load_image_dir
from data.synthetic import make_digits
from evalkit.reports import emit_report
from models.data_store import load_checkpoint
from utils.config import TOOLKIT_VERSION
from utils.io_utils import atomic_write_bytes, atomic_write_text, canonical_json, file_digest

logger = logging.getLogger(__name__)


@dataclass
class RunContext:
    subcommand: str
    config: object
    inputs: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)

    @property
    def out_dir(self):
        return Path(self.config.output.out_dir)

    @property
    def threads(self):
        return self.config.threads

    def record_input(self, path):
        path = Path(path)
        targets = sorted(p for p in path.rglob("*") if p.is_file()) if path.is_dir() else [path]
        for target in targets:
            self.inputs[str(target)] = file_digest(target)

    # inputs

    def load_datasets(self):
        """(train, test) for the configured source; a single source is split by test_fraction."""
        data = self.config.data
        if data.format == "synthetic":
            full = make_digits(data.synthetic_count, data.synthetic_seed, size=data.synthetic_size)
            return split(full, data.test_fraction, data.split_seed)
        if data.format == "image_dir":
            self.record_input(data.image_dir)
            return split(load_image_dir(data.image_dir), data.test_fraction, data.split_seed)

        names = None
        if data.class_names:
            self.record_input(data.class_names)
            names = load_class_names(data.class_names)
        self.record_input(data.train_images)
        self.record_input(data.train_labels)
        train_set = load_idx(data.train_images, data.train_labels, names)
        if not data.test_images:
            return split(train_set, data.test_fraction, data.split_seed)
        self.record_input(data.test_images)
        self.record_input(data.test_labels)
        test_set = load_idx(data.test_images, data.test_labels, names or train_set.class_names)
        return train_set, test_set

    def eval_set(self):
        _, test_set = self.load_datasets()
        limit = self.config.data.eval_limit
        if limit is not None and limit < len(test_set):
            test_set = test_set.subset(np.arange(limit))
        return test_set.require_nonempty("evaluation set")

    def load_models(self):
        models = []
        for path in self.config.checkpoints:
            self.record_input(path)
            models.append(load_checkpoint(path))
        return models

    def model_id(self, index=0):
        return Path(self.config.checkpoints[index]).stem

    # outputs

    def output_path(self, *parts):
        return self.out_dir.joinpath(*parts)

    def safe_name(self, name, fallback="patch"):
        return secure_filename(str(name)) or fallback

    def emit(self, report, stem, pivot=False):
        for fmt in self.config.output.formats:
            path = emit_report(report, fmt, self.output_path(f"{stem}.{fmt}"))
            self.outputs.append(str(path))
        if pivot and "csv" in self.config.output.formats:
            path = emit_report(report, "csv", self.output_path(f"{stem}_pivot.csv"), pivot=True)
            self.outputs.append(str(path))

    def write_text(self, name, text):
        path = atomic_write_text(self.output_path(name), text)
        self.outputs.append(str(path))
        return path

    def write_png(self, image, *parts):
        """Save a raw [0,1] (C,H,W) image as an 8-bit PNG."""
        pixels = np.round(np.clip(np.asarray(image), 0.0, 1.0) * 255.0).astype(np.uint8)
        if pixels.shape[0] == 1:
            img = Image.fromarray(pixels[0])
        else:
            img = Image.fromarray(np.ascontiguousarray(pixels.transpose(1, 2, 0)))
        path = self.output_path(*parts)
        path.parent.mkdir(parents=True, exist_ok=True)
        buffer = BytesIO()
        img.save(buffer, format="PNG")
        atomic_write_bytes(path, buffer.getvalue())
        self.outputs.append(str(path))
        return path

    def write_manifest(self):
        manifest = {
            "subcommand": self.subcommand,
            "resolved_config": self.config.to_dict(),
            "seeds": self.config.seeds(),
            "toolkit_version": TOOLKIT_VERSION,
            "input_digests": dict(sorted(self.inputs.items())),
        }
        path = atomic_write_text(self.output_path("manifest.json"), canonical_json(manifest) + "\n")
        logger.info("wrote manifest %s", path)
        return path
