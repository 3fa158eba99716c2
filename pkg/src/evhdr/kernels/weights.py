"""Weight container: one flat little-endian float32 blob plus a JSON manifest.

Manifest layout::

    {"format": "evhdr-weights", "version": 1, "dtype": "<f4", "data": "model.bin",
     "meta": {...}, "tensors": {"name": {"shape": [...], "offset": bytes}}}

Tensors are stored in sorted-name order, so saving the same parameters
always produces the same bytes.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import FormatError, MissingFile, ShapeMismatch


def save_weights(params: dict, manifest_path, meta=None) -> Path:
    manifest_path = Path(manifest_path)
    blob_path = manifest_path.with_suffix(".bin")
    tensors, chunks, offset = {}, [], 0
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f4")
        tensors[name] = {"shape": list(arr.shape), "offset": offset}
        chunks.append(arr.tobytes())
        offset += arr.nbytes
    blob_path.write_bytes(b"".join(chunks))
    doc = {
        "format": "evhdr-weights",
        "version": 1,
        "dtype": "<f4",
        "data": blob_path.name,
        "meta": meta or {},
        "tensors": tensors,
    }
    manifest_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest_path


def load_weights(manifest_path):
    """Returns ``(params, meta)`` with float64 arrays."""
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise MissingFile(str(manifest_path))
    doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    if doc.get("format") != "evhdr-weights":
        raise FormatError(f"{manifest_path} is not a weight manifest")
    blob_path = manifest_path.parent / doc["data"]
    if not blob_path.exists():
        raise MissingFile(str(blob_path))
    blob = blob_path.read_bytes()
    params = {}
    for name, info in doc["tensors"].items():
        shape = tuple(info["shape"])
        n = int(np.prod(shape, dtype=np.int64))
        start = int(info["offset"])
        if start + 4 * n > len(blob):
            raise ShapeMismatch(f"tensor {name} runs past the end of {blob_path.name}")
        params[name] = np.frombuffer(blob, dtype="<f4", count=n, offset=start).astype(np.float64).reshape(shape)
    return params, doc.get("meta", {})
