"""Checkpoint persistence for victim models (magic ``GSTM1\\n``)."""
import logging

from data.datasets import NormalizationSpec
from models.models import ArchitectureSpec, Model
from utils.errors import CorruptHeaderError, ToolkitError
from utils.io_utils import decode_container, encode_container, read_container, write_container

logger = logging.getLogger(__name__)

MODEL_MAGIC = b"GSTM1\n"


def _meta(model):
    return {
        "kind": "model",
        "spec": model.spec.to_dict(),
        "class_names": list(model.class_names),
        "normalization": model.normalization.to_dict(),
    }


def checkpoint_bytes(model):
    return encode_container(MODEL_MAGIC, _meta(model), model.params)


def save_checkpoint(model, path):
    write_container(path, MODEL_MAGIC, _meta(model), model.params)
    logger.info("saved checkpoint %s (%d parameters)", path, model.num_parameters)
    return path


def _model_from(meta, tensors, path):
    try:
        if meta.get("kind") != "model":
            raise CorruptHeaderError(f"container holds a {meta.get('kind')!r}, not a model", path)
        spec = ArchitectureSpec.from_dict(meta["spec"])
        normalization = NormalizationSpec.from_dict(meta["normalization"])
        return Model(spec, tensors, meta["class_names"], normalization)
    except CorruptHeaderError:
        raise
    except (KeyError, TypeError, ValueError, AttributeError, ToolkitError) as exc:
        raise CorruptHeaderError(f"header does not describe a valid model: {exc}", path) from exc


def model_from_bytes(payload, path=None):
    meta, tensors = decode_container(payload, MODEL_MAGIC, path)
    return _model_from(meta, tensors, path)


def load_checkpoint(path):
    meta, tensors = read_container(path, MODEL_MAGIC)
    model = _model_from(meta, tensors, path)
    logger.info("loaded checkpoint %s", path)
    return model
