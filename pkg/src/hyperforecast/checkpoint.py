"""Parameter checkpoints: a JSON manifest followed by raw little-endian float64 data.

Layout::

    bytes 0..3    magic b"HGFC"
    bytes 4..5    format version, uint16 little-endian (currently 1)
    bytes 6..7    reserved, zero
    bytes 8..15   manifest length L in bytes, uint64 little-endian
    bytes 16..    manifest, UTF-8 JSON of length L
    then          tensor payload: each tensor's values, C order, '<f8'

The manifest holds ``tensors`` (a list of ``{"key", "shape", "offset",
"count"}`` with offsets in values from the payload start) and a free-form
``meta`` object (model config, data statistics, provenance).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"HGFC"
VERSION = 1
_HEADER = struct.Struct("<4sHHQ")


class CheckpointError(ValueError):
    """A checkpoint is unreadable or does not fit the requested model."""


def save(path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    entries, offset = [], 0
    arrays = []
    for key in tensors:
        arr = np.asarray(tensors[key], dtype="<f8")
        entries.append({"key": key, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        offset += arr.size
        arrays.append(arr)
    manifest = json.dumps({"dtype": "<f8", "tensors": entries, "meta": meta or {}},
                          sort_keys=True, separators=(",", ":")).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, 0, len(manifest)))
        fh.write(manifest)
        for arr in arrays:
            fh.write(arr.tobytes(order="C"))


def read_manifest(path) -> dict:
    return load(path)[1]


def load(path) -> tuple[dict[str, np.ndarray], dict]:
    """Return ``(tensors, manifest)``."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(raw) < _HEADER.size:
        raise CheckpointError(f"{path} is too short to be a checkpoint")
    magic, version, _, length = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        manifest = json.loads(raw[_HEADER.size:_HEADER.size + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt manifest in {path}") from exc
    payload = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size + length)
    tensors = {}
    for entry in manifest["tensors"]:
        start, count = entry["offset"], entry["count"]
        if start + count > payload.size:
            raise CheckpointError(f"{path}: tensor {entry['key']!r} runs past the payload")
        tensors[entry["key"]] = payload[start:start + count].astype(np.float64).reshape(entry["shape"])
    return tensors, manifest
