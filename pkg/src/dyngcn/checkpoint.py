"""Checkpoint file format: model config, metadata, and raw arrays.

Layout on disk:

  magic ``DGCK`` | u16 version | u64 header length | UTF-8 JSON header
  | concatenated little-endian array buffers

The JSON header holds the model config, free-form metadata (modality,
epoch, class names), and an ordered array table (name, shape, dtype).
Buffers are written raw, so a save/load round trip is bit-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .model import ModelConfig, build_model

MAGIC = b"DGCK"
FORMAT_VERSION = 1

_DTYPES = {"float32": "<f4", "float64": "<f8"}


def _model_arrays(model):
    for name, param in model.named_parameters():
        yield name, param.data
    for name, buf in model.named_buffers():
        yield name, buf


def save_checkpoint(path, model, meta=None):
    path = Path(path)
    table = []
    buffers = []
    for name, arr in _model_arrays(model):
        dtype = str(arr.dtype)
        if dtype not in _DTYPES:
            raise ValueError(f"array {name!r} has unsupported dtype {dtype}")
        table.append({"name": name, "shape": list(arr.shape), "dtype": dtype})
        buffers.append(np.ascontiguousarray(arr, dtype=_DTYPES[dtype]).tobytes())
    header = {
        "version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "meta": dict(meta or {}),
        "arrays": table,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HQ", FORMAT_VERSION, len(header_bytes)))
        fh.write(header_bytes)
        for blob in buffers:
            fh.write(blob)
    return path


def read_checkpoint_header(path):
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint (bad magic {raw[:4]!r})")
    version, header_len = struct.unpack_from("<HQ", raw, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    start = 4 + struct.calcsize("<HQ")
    if start + header_len > len(raw):
        raise ValueError(f"{path}: truncated header")
    header = json.loads(raw[start : start + header_len].decode("utf-8"))
    return header, raw, start + header_len


def load_checkpoint(path):
    """Rebuild the model a checkpoint describes; returns (model, meta)."""
    header, raw, offset = read_checkpoint_header(path)
    config = ModelConfig.from_dict(header["config"])
    dtypes = {entry["dtype"] for entry in header["arrays"]}
    dtype = np.float64 if dtypes == {"float64"} else np.float32
    model = build_model(config, seed=0, dtype=dtype)

    stored = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype=_DTYPES[entry["dtype"]], count=count, offset=offset)
        stored[entry["name"]] = arr.reshape(shape).astype(entry["dtype"])
        offset += arr.nbytes
    if offset != len(raw):
        raise ValueError(f"{path}: {len(raw) - offset} trailing bytes after arrays")

    expected = dict(_model_arrays(model))
    if set(stored) != set(expected):
        missing = sorted(set(expected) - set(stored))
        extra = sorted(set(stored) - set(expected))
        raise ValueError(
            f"{path}: array set does not match the configured model "
            f"(missing {missing[:3]}, unexpected {extra[:3]})"
        )
    for name, target in expected.items():
        value = stored[name]
        if target.shape != value.shape:
            raise ValueError(
                f"{path}: array {name!r} has shape {value.shape}, model expects {target.shape}"
            )
        target[...] = value
    return model, header["meta"]
