"""Model checkpoints.

Byte layout (all integers little-endian)::

    offset  size  content
    0       4     magic b"NNCK"
    4       4     uint32 format version
    8       8     uint64 header length H
    16      H     UTF-8 JSON header
    16+H    ...   float64 little-endian payload

The header holds ``{"version", "model": ModelSpec dict, "tensors": [{"name",
"shape", "offset", "count"}]}`` where ``offset`` and ``count`` are measured in
float64 elements from the start of the payload. Tensors appear in
``Model.parameters()`` order: the weight matrices, then (alpha, beta) pairs by
layer index.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import DataError
from ..models import Model, ModelSpec, build_model

MAGIC = b"NNCK"
VERSION = 1
_PREFIX = struct.Struct("<4sIQ")


def save_checkpoint(model: Model, path) -> Path:
    params = model.parameters()
    tensors, offset = [], 0
    for p in params:
        tensors.append({"name": p.name, "shape": list(p.shape), "offset": offset, "count": int(p.data.size)})
        offset += int(p.data.size)
    header = json.dumps({"version": VERSION, "model": model.spec.to_dict(), "tensors": tensors},
                        sort_keys=True).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(p.data, dtype="<f8").tobytes() for p in params)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(_PREFIX.pack(MAGIC, VERSION, len(header)) + header + payload)
    return path


def load_checkpoint(path) -> Model:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from None
    if len(blob) < _PREFIX.size:
        raise DataError(f"{path}: truncated checkpoint")
    magic, version, hlen = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise DataError(f"{path}: not a checkpoint file")
    if version != VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    try:
        header = json.loads(blob[_PREFIX.size:_PREFIX.size + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: corrupt header ({exc})") from None
    payload = np.frombuffer(blob, dtype="<f8", offset=_PREFIX.size + hlen)

    # rebuild the parameter layout, then overwrite every tensor from the payload
    model = build_model(ModelSpec.from_dict(header["model"]), np.random.default_rng(0))
    params = model.parameters()
    entries = header["tensors"]
    if len(entries) != len(params):
        raise DataError(f"{path}: header lists {len(entries)} tensors, model has {len(params)}")
    for p, entry in zip(params, entries):
        start, count = entry["offset"], entry["count"]
        if tuple(entry["shape"]) != p.shape or start + count > payload.size:
            raise DataError(f"{path}: tensor {entry['name']} does not match the model layout")
        p.data = payload[start:start + count].astype(np.float64).reshape(p.shape)
    return model


def parameters_equal(a: Model, b: Model) -> bool:
    pa, pb = a.parameters(), b.parameters()
    return len(pa) == len(pb) and all(np.array_equal(x.data, y.data) for x, y in zip(pa, pb))

