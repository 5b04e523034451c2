"""Writer for the SSLF feature-file format consumed downstream.

Byte layout: magic "SSLF", version u32=1, n_frames u32, dim u32, layer
u32, id_len u16, UTF-8 model id, then n_frames*dim little-endian float32
row-major.  Each file is written atomically (temp file + rename).
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

_HEADER = struct.Struct("<4sIIIIH")
MAGIC = b"SSLF"
VERSION = 1


def encode(values: np.ndarray, layer: int, model_id: str) -> bytes:
    values = np.ascontiguousarray(values, dtype="<f4")
    if values.ndim != 2:
        raise ValueError(f"feature matrix must be 2-D, got {values.ndim}-D")
    if not np.isfinite(values).all():
        raise ValueError("feature matrix contains NaN or inf")
    id_bytes = model_id.encode("utf-8")
    header = _HEADER.pack(MAGIC, VERSION, values.shape[0], values.shape[1], layer, len(id_bytes))
    return header + id_bytes + values.tobytes()


def write_file(values: np.ndarray, layer: int, model_id: str, path) -> None:
    path = Path(path)
    blob = encode(values, layer, model_id)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(blob)
    os.replace(tmp, path)
