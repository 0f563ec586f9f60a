"""Flat binary parameter container.

Layout (all integers little-endian)::

    8 bytes   magic  b"WVNNCKPT"
    uint32    format version (1)
    uint32    manifest length in bytes
    manifest  UTF-8 JSON: {"config": {...}, "tensors": [{"name", "shape", "offset"}, ...]}
    payload   float32 little-endian; ``offset`` counts elements from payload start
"""
from __future__ import annotations

import csv
import json
import struct

import numpy as np

from ..core import FormatError
from .model import ModelConfig, WaveNetVnnParams, parameter_shapes

MAGIC = b"WVNNCKPT"
VERSION = 1
_HEADER = struct.Struct("<8sII")


def save_checkpoint(params: WaveNetVnnParams, path) -> None:
    entries, offset = [], 0
    for name, value in params.items():
        entries.append({"name": name, "shape": list(value.shape), "offset": offset})
        offset += value.size
    manifest = json.dumps({"config": params.config.to_dict(), "tensors": entries},
                          sort_keys=True).encode()
    payload = np.concatenate([v.ravel() for v in params.tensors.values()]).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, len(manifest)))
        fh.write(manifest)
        fh.write(payload.tobytes())


def load_checkpoint(path) -> WaveNetVnnParams:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: too short for a checkpoint header")
    magic, version, size = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    try:
        manifest = json.loads(raw[_HEADER.size : _HEADER.size + size])
        config = ModelConfig(**manifest["config"])
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: malformed manifest ({exc})") from exc
    body = raw[_HEADER.size + size :]
    if len(body) % 4:
        raise FormatError(f"{path}: payload is not a whole number of float32 values")
    payload = np.frombuffer(body, dtype="<f4")
    expected = parameter_shapes(config)
    tensors = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        if expected.get(entry["name"]) != shape:
            raise FormatError(f"{path}: unexpected tensor {entry['name']} {shape}")
        count = int(np.prod(shape))
        chunk = payload[entry["offset"] : entry["offset"] + count]
        if chunk.size != count:
            raise FormatError(f"{path}: payload truncated at {entry['name']}")
        tensors[entry["name"]] = chunk.astype(np.float64).reshape(shape)
    if set(tensors) != set(expected):
        raise FormatError(f"{path}: missing tensors {sorted(set(expected) - set(tensors))}")
    return WaveNetVnnParams(config, {k: tensors[k] for k in expected})


def dump_csv(params: WaveNetVnnParams, path) -> None:
    """One row per scalar: name, flat index, value (repr precision), for diffing."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "index", "value"])
        for name, value in params.items():
            for i, v in enumerate(value.ravel()):
                writer.writerow([name, i, repr(float(v))])
