"""Versioned checkpoint container for model parameters.

Layout (all integers little-endian):

    magic      4 bytes   b"MOSC"
    version    u32       1
    header_len u32
    header     header_len bytes of UTF-8 JSON:
                 {"arch": {...}, "init_seed": int,
                  "tensors": [{"name": str, "dtype": "<f4"|"<f8",
                               "shape": [int, ...]}, ...]}
    payload    tensors concatenated in header order, C-contiguous,
               little-endian

Round-trips are bit-exact for both supported dtypes.  The reader validates
magic, version, tensor completeness against the architecture, and
finiteness of every value.
"""

from __future__ import annotations

import io
import json
import struct
from typing import BinaryIO

import numpy as np

from .errors import CheckpointCorruptionError, CheckpointFormatError
from .model import ArchitectureConfig, ModelParams, layer_shapes

MAGIC = b"MOSC"
VERSION = 1
_DTYPES = ("<f4", "<f8")


def save_checkpoint(params: ModelParams, sink: BinaryIO) -> None:
    names = list(params.tensors)
    header = {
        "arch": params.arch.to_dict(),
        "init_seed": params.init_seed,
        "tensors": [
            {
                "name": n,
                "dtype": params.tensors[n].dtype.newbyteorder("<").str,
                "shape": list(params.tensors[n].shape),
            }
            for n in names
        ],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    sink.write(MAGIC)
    sink.write(struct.pack("<II", VERSION, len(header_bytes)))
    sink.write(header_bytes)
    for n in names:
        arr = params.tensors[n]
        if arr.dtype.newbyteorder("<").str not in _DTYPES:
            raise CheckpointFormatError(f"tensor {n!r} has unsupported dtype {arr.dtype}")
        sink.write(np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes())


def load_checkpoint(source: BinaryIO) -> ModelParams:
    head = source.read(12)
    if len(head) < 12:
        raise CheckpointFormatError("stream too short for a checkpoint header")
    if head[:4] != MAGIC:
        raise CheckpointFormatError(f"bad magic {head[:4]!r}, expected {MAGIC!r}")
    version, header_len = struct.unpack("<II", head[4:])
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}")
    header_bytes = source.read(header_len)
    if len(header_bytes) < header_len:
        raise CheckpointCorruptionError("stream ends inside the JSON header")
    try:
        header = json.loads(header_bytes.decode("utf-8"))
        arch = ArchitectureConfig.from_dict(header["arch"])
        specs = header["tensors"]
        init_seed = int(header["init_seed"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointFormatError(f"malformed checkpoint header: {exc}") from exc

    tensors = {}
    for spec in specs:
        name, dtype, shape = spec["name"], spec["dtype"], tuple(spec["shape"])
        if dtype not in _DTYPES:
            raise CheckpointFormatError(f"tensor {name!r} has unsupported dtype {dtype!r}")
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = count * np.dtype(dtype).itemsize
        payload = source.read(nbytes)
        if len(payload) < nbytes:
            raise CheckpointCorruptionError(
                f"tensor {name!r} truncated: expected {nbytes} bytes, got {len(payload)}"
            )
        tensors[name] = np.frombuffer(payload, dtype=dtype).reshape(shape).copy()

    expected = {name: shape for name, shape, _fan in layer_shapes(arch)}
    if set(tensors) != set(expected):
        missing = sorted(set(expected) - set(tensors))
        extra = sorted(set(tensors) - set(expected))
        raise CheckpointCorruptionError(
            f"tensor set does not match architecture (missing={missing}, extra={extra})"
        )
    for name, shape in expected.items():
        if tensors[name].shape != shape:
            raise CheckpointCorruptionError(
                f"tensor {name!r} has shape {tensors[name].shape}, architecture wants {shape}"
            )
        if not np.isfinite(tensors[name]).all():
            raise CheckpointCorruptionError(f"tensor {name!r} contains non-finite values")
    return ModelParams(arch=arch, tensors=tensors, init_seed=init_seed)


def save_checkpoint_file(params: ModelParams, path) -> None:
    buf = io.BytesIO()
    save_checkpoint(params, buf)
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_checkpoint_file(path) -> ModelParams:
    with open(path, "rb") as f:
        return load_checkpoint(f)
