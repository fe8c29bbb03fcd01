"""Dataset ingestion: IDX binaries, PNG directories and class-name files.

IDX files are big-endian:

    images  magic 0x00000803, count, rows, cols, then count*rows*cols bytes
    labels  magic 0x00000801, count, then count bytes

A ``.gz`` suffix (or a gzip signature) is decompressed transparently.
"""
import gzip
import logging
import struct
from pathlib import Path

import numpy as np
import pandas as pd
from PIL import Image

from data.datasets import Dataset
from utils.errors import (
    BadLabelError,
    BadMagicError,
    DimensionMismatchError,
    EmptyDatasetError,
    MissingFileError,
    TruncatedFileError,
)
from utils.io_utils import atomic_write_bytes

logger = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
LABELS_CSV = "labels.csv"
CLASS_NAMES_FILE = "class_names.txt"


def _read_payload(path):
    path = Path(path)
    if not path.is_file():
        raise MissingFileError("file not found", path)
    payload = path.read_bytes()
    if path.suffix == ".gz" or payload[:2] == b"\x1f\x8b":
        try:
            payload = gzip.decompress(payload)
        except (OSError, EOFError) as exc:
            raise TruncatedFileError(f"gzip stream is damaged: {exc}", path) from exc
    return payload


def _parse_idx(payload, magic, ndims, path):
    header_size = 4 + 4 * ndims
    if len(payload) < 4:
        raise TruncatedFileError("file shorter than the IDX magic", path)
    (found,) = struct.unpack(">I", payload[:4])
    if found != magic:
        raise BadMagicError(f"IDX magic 0x{found:08x}, expected 0x{magic:08x}", path)
    if len(payload) < header_size:
        raise TruncatedFileError("IDX header is incomplete", path)
    dims = struct.unpack(f">{ndims}I", payload[4:header_size])
    expected = int(np.prod(dims, dtype=np.int64))
    body = payload[header_size:]
    if len(body) < expected:
        raise TruncatedFileError(f"IDX body has {len(body)} bytes, dimensions {dims} need {expected}", path)
    if len(body) > expected:
        raise DimensionMismatchError(f"IDX body has {len(body) - expected} bytes beyond dimensions {dims}", path)
    return dims, np.frombuffer(body, dtype=np.uint8)


def load_class_names(path):
    """One class name per line; line number (from 0) is the class index."""
    path = Path(path)
    if not path.is_file():
        raise MissingFileError("class-names file not found", path)
    return [line.strip() for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]


def _class_names_for(labels, class_names, path):
    if class_names is None:
        top = int(labels.max()) + 1 if labels.size else 1
        return [str(i) for i in range(top)]
    class_names = list(class_names)
    if labels.size and int(labels.max()) >= len(class_names):
        raise BadLabelError(f"label {int(labels.max())} has no entry among {len(class_names)} class names", path)
    return class_names


def load_idx(images_path, labels_path, class_names=None):
    (count, rows, cols), pixels = _parse_idx(_read_payload(images_path), IDX_IMAGES_MAGIC, 3, images_path)
    (label_count,), labels = _parse_idx(_read_payload(labels_path), IDX_LABELS_MAGIC, 1, labels_path)
    if label_count != count:
        raise DimensionMismatchError(f"{count} images but {label_count} labels", labels_path)
    if count == 0:
        raise EmptyDatasetError(f"{images_path} holds no images")
    labels = labels.astype(np.int64)
    names = _class_names_for(labels, class_names, labels_path)
    images = (pixels.reshape(count, 1, rows, cols).astype(np.float32) / np.float32(255.0))
    logger.info("loaded %d IDX images of %dx%d from %s", count, rows, cols, images_path)
    return Dataset(images, labels, names, source=str(images_path))


def write_idx(images_path, labels_path, pixels, labels):
    """Write uint8 pixels (N,H,W) and labels (N,) as an IDX pair."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    count, rows, cols = pixels.shape
    image_bytes = struct.pack(">IIII", IDX_IMAGES_MAGIC, count, rows, cols) + pixels.tobytes()
    label_bytes = struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0]) + labels.tobytes()
    for path, payload in ((images_path, image_bytes), (labels_path, label_bytes)):
        if str(path).endswith(".gz"):
            payload = gzip.compress(payload, mtime=0)
        atomic_write_bytes(path, payload)
    return images_path, labels_path


def _read_png(path, row):
    if not path.is_file():
        raise MissingFileError(f"image {path.name} not found", path.parent, row=row)
    with Image.open(path) as img:
        if img.mode in ("L", "1", "LA", "I;16"):
            img = img.convert("L")
            array = np.asarray(img, dtype=np.uint8)[None, :, :]
        else:
            img = img.convert("RGB")
            array = np.asarray(img, dtype=np.uint8).transpose(2, 0, 1)
    return array


def load_image_dir(root_path):
    """Load labels.csv (filename,label_index) and the PNG files it names, in csv order."""
    root = Path(root_path)
    csv_path = root / LABELS_CSV
    if not csv_path.is_file():
        raise MissingFileError(f"{LABELS_CSV} not found", root)
    names_path = root / CLASS_NAMES_FILE
    class_names = load_class_names(names_path) if names_path.is_file() else None

    try:
        table = pd.read_csv(csv_path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise BadLabelError("header must be 'filename,label_index'", csv_path) from None
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise BadLabelError(f"cannot parse {LABELS_CSV}: {exc}", csv_path) from exc
    table.columns = [str(column).strip() for column in table.columns]
    if not {"filename", "label_index"} <= set(table.columns):
        raise BadLabelError("header must be 'filename,label_index'", csv_path)

    images, labels = [], []
    for row_number, (filename, raw_label) in enumerate(zip(table["filename"], table["label_index"]), start=1):
        filename = filename.strip() if isinstance(filename, str) else ""
        raw_label = raw_label.strip() if isinstance(raw_label, str) else ""
        try:
            label = int(raw_label)
        except ValueError:
            raise BadLabelError(f"label {raw_label!r} is not an integer", csv_path, row=row_number) from None
        if label < 0 or (class_names is not None and label >= len(class_names)):
            raise BadLabelError(f"label {label} out of range", csv_path, row=row_number)
        array = _read_png(root / filename, row_number)
        if images and array.shape != images[0].shape:
            raise DimensionMismatchError(
                f"row {row_number}: {filename} has shape {array.shape}, expected {images[0].shape}", csv_path)
        images.append(array)
        labels.append(label)
    if not images:
        raise EmptyDatasetError(f"{csv_path} lists no images")

    labels = np.asarray(labels, dtype=np.int64)
    names = _class_names_for(labels, class_names, csv_path)
    stacked = np.stack(images).astype(np.float32) / np.float32(255.0)
    logger.info("loaded %d PNG images of shape %s from %s", len(images), images[0].shape, root)
    return Dataset(stacked, labels, names, source=str(root))
