"""Model checkpoint container.

Binary layout (all integers little-endian):

    bytes 0-7   magic b"RFCKPT\\x00\\x01"
    bytes 8-11  uint32 header length in bytes
    header      UTF-8 JSON: {"format_version": 1, "seed": int,
                 "config": {ModelConfig fields}, "frozen": [names],
                 "tensors": [{"name": str, "shape": [int, ...]}, ...]}
    payload     for each tensor, in header order: little-endian float32
                values in C order

Parameters are float64 in memory and quantized to float32 on save; loading
casts back to float64.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .errors import DataError
from .model import ModelConfig, ModelParams

MAGIC = b"RFCKPT\x00\x01"
FORMAT_VERSION = 1


def save_checkpoint(path, params: ModelParams, config: ModelConfig, seed: int) -> None:
    path = Path(path)
    names = list(params.tensors)
    header = {
        "format_version": FORMAT_VERSION,
        "seed": int(seed),
        "config": asdict(config),
        "frozen": sorted(params.frozen),
        "tensors": [
            {"name": n, "shape": list(params.tensors[n].shape)} for n in names
        ],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for n in names:
            fh.write(np.ascontiguousarray(params.tensors[n], dtype="<f4").tobytes())


def load_checkpoint(path):
    """Read a checkpoint; returns (ModelParams, ModelConfig, seed)."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise DataError(f"{path}: not a checkpoint file (bad magic)")
    (header_len,) = struct.unpack_from("<I", raw, len(MAGIC))
    header_start = len(MAGIC) + 4
    header = json.loads(raw[header_start : header_start + header_len].decode("utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {header.get('format_version')}")
    config = ModelConfig(**header["config"])
    offset = header_start + header_len
    tensors = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
        offset += count * 4
        tensors[entry["name"]] = arr.astype(np.float64).reshape(shape)
    if offset != len(raw):
        raise DataError(f"{path}: trailing bytes in checkpoint payload")
    params = ModelParams(tensors=tensors, frozen=frozenset(header["frozen"]))
    return params, config, int(header["seed"])
