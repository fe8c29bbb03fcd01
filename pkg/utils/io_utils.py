"""Atomic file writes, digests and the binary tensor container.

Container layout (checkpoints and patches):

    <6-byte magic> <canonical JSON header> "\\n" <little-endian float32 blob>

The header lists every tensor with its name, shape, byte offset and byte
length inside the blob, plus free-form metadata.
"""
import hashlib
import json
import logging
import os
import tempfile
from pathlib import Path

import numpy as np

from utils.errors import (
    BadMagicError,
    CorruptHeaderError,
    TruncatedFileError,
    VersionMismatchError,
)

logger = logging.getLogger(__name__)

CONTAINER_VERSION = 1
_FLOAT = np.dtype("<f4")


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True, allow_nan=False)


def _umask():
    mask = os.umask(0)
    os.umask(mask)
    return mask


def atomic_write_bytes(path, payload):
    """Write payload to path via a temp file in the same directory and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        # mkstemp creates 0600; give the file the mode open() would
        os.chmod(tmp_name, 0o666 & ~_umask())
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    logger.debug("wrote %s (%d bytes)", path, len(payload))
    return path


def atomic_write_text(path, text):
    return atomic_write_bytes(path, text.encode("utf-8"))


def file_digest(path):
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def encode_container(magic, meta, tensors):
    """Serialize an ordered mapping name -> float32 array into container bytes."""
    manifest = []
    blobs = []
    offset = 0
    for name, array in tensors.items():
        data = np.ascontiguousarray(array, dtype=_FLOAT).tobytes()
        manifest.append({
            "name": name,
            "shape": [int(dim) for dim in np.shape(array)],
            "offset": offset,
            "nbytes": len(data),
        })
        blobs.append(data)
        offset += len(data)
    header = {
        "format_version": CONTAINER_VERSION,
        "meta": meta,
        "tensors": manifest,
        "blob_size": offset,
    }
    return magic + canonical_json(header).encode("ascii") + b"\n" + b"".join(blobs)


def decode_container(payload, magic, path=None):
    """Parse container bytes; returns (meta, ordered dict of float32 arrays).

    Nothing is returned unless the whole file is consistent.
    """
    if not payload.startswith(magic):
        raise BadMagicError(f"expected magic {magic!r}, found {payload[:len(magic)]!r}", path)
    end = payload.find(b"\n", len(magic))
    if end < 0:
        raise TruncatedFileError("header is not terminated", path)
    try:
        header = json.loads(payload[len(magic):end].decode("ascii"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptHeaderError(f"unreadable header: {exc}", path) from exc
    if not isinstance(header, dict):
        raise CorruptHeaderError("header is not an object", path)
    version = header.get("format_version")
    if version != CONTAINER_VERSION:
        raise VersionMismatchError(f"format version {version}, expected {CONTAINER_VERSION}", path)
    try:
        blob_size = int(header["blob_size"])
        manifest = list(header["tensors"])
        meta = header["meta"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptHeaderError(f"missing header field: {exc}", path) from exc

    blob = payload[end + 1:]
    if len(blob) < blob_size:
        raise TruncatedFileError(f"blob has {len(blob)} bytes, header declares {blob_size}", path)
    if len(blob) > blob_size:
        raise CorruptHeaderError(f"{len(blob) - blob_size} trailing bytes after blob", path)

    tensors = {}
    for entry in manifest:
        try:
            name = entry["name"]
            shape = tuple(int(dim) for dim in entry["shape"])
            offset = int(entry["offset"])
            nbytes = int(entry["nbytes"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptHeaderError(f"bad tensor entry {entry!r}", path) from exc
        count = int(np.prod(shape, dtype=np.int64))
        if nbytes != count * _FLOAT.itemsize or offset < 0 or offset + nbytes > blob_size:
            raise CorruptHeaderError(f"tensor {name!r} does not match its byte range", path)
        array = np.frombuffer(blob, dtype=_FLOAT, count=count, offset=offset)
        tensors[name] = array.astype(np.float32).reshape(shape)
    return meta, tensors


def write_container(path, magic, meta, tensors):
    return atomic_write_bytes(path, encode_container(magic, meta, tensors))


def read_container(path, magic):
    with open(path, "rb") as handle:
        payload = handle.read()
    return decode_container(payload, magic, path)
