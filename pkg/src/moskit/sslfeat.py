"""Binary container for precomputed SSL features, plus a synthetic extractor.

The on-disk format ("SSLF") is fixed and versioned so files can be produced
by out-of-process extractors:

    magic   4 bytes  b"SSLF"
    version u32      1
    n_frames u32
    dim      u32
    layer    u32     transformer layer the features came from
    id_len   u16     length of the UTF-8 model-id string
    id       id_len bytes
    payload  n_frames * dim little-endian float32, row-major

Everything is little-endian.  Total size is 22 + id_len + 4*n_frames*dim
bytes exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO

import numpy as np

from .dsp import AudioClip
from .errors import (
    FeatureCorruptionError,
    FeatureFormatError,
    FeatureValidationError,
    InvalidInputError,
)

MAGIC = b"SSLF"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIH")

#: Hidden width of the reference SSL backbone.
DEFAULT_DIM = 1920
#: Transformer layer the reference extractor reads.
DEFAULT_LAYER = 9


@dataclass
class SslFeatureMatrix:
    """Per-utterance SSL hidden states, shape [n_frames, dim]."""

    values: np.ndarray
    source_layer: int = DEFAULT_LAYER
    source_model_id: str = "pseudo"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise InvalidInputError(f"feature matrix must be 2-D, got {self.values.ndim}-D")
        if not np.isfinite(self.values).all():
            raise FeatureValidationError("feature matrix contains NaN or inf")

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


def write_features(m: SslFeatureMatrix, sink: BinaryIO) -> None:
    """Serialize ``m`` in the SSLF format."""
    id_bytes = m.source_model_id.encode("utf-8")
    if len(id_bytes) > 0xFFFF:
        raise InvalidInputError("model id longer than 65535 bytes")
    sink.write(_HEADER.pack(MAGIC, VERSION, m.n_frames, m.dim, m.source_layer, len(id_bytes)))
    sink.write(id_bytes)
    sink.write(np.ascontiguousarray(m.values, dtype="<f4").tobytes())


def read_features(source: BinaryIO) -> SslFeatureMatrix:
    """Parse an SSLF stream, validating structure and finiteness."""
    head = source.read(_HEADER.size)
    if len(head) < _HEADER.size:
        raise FeatureFormatError("stream too short for an SSLF header")
    magic, version, n_frames, dim, layer, id_len = _HEADER.unpack(head)
    if magic != MAGIC:
        raise FeatureFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FeatureFormatError(f"unsupported SSLF version {version}")
    id_bytes = source.read(id_len)
    if len(id_bytes) < id_len:
        raise FeatureCorruptionError("stream ends inside the model-id field")
    payload_size = 4 * n_frames * dim
    payload = source.read(payload_size)
    if len(payload) < payload_size:
        raise FeatureCorruptionError(
            f"payload truncated: expected {payload_size} bytes, got {len(payload)}"
        )
    values = np.frombuffer(payload, dtype="<f4").reshape(n_frames, dim)
    return SslFeatureMatrix(
        values=values.copy(),
        source_layer=layer,
        source_model_id=id_bytes.decode("utf-8"),
    )


def write_features_file(m: SslFeatureMatrix, path) -> None:
    with open(path, "wb") as f:
        write_features(m, f)


def read_features_file(path) -> SslFeatureMatrix:
    with open(path, "rb") as f:
        return read_features(f)


# ---------------------------------------------------------------------------
# Synthetic extractor
# ---------------------------------------------------------------------------

_FRAME_LEN = 320
_N_BANDS = 16
_PSEUDO_RATE = 16000
_PSEUDO_SAMPLES = 160000


def pseudo_extract(clip: AudioClip, dim: int, seed: int) -> SslFeatureMatrix:
    """Deterministic stand-in for the real SSL backbone.

    Each 320-sample frame is summarized by 18 statistics (RMS, zero-crossing
    rate, 16 log band energies up to 8 kHz) and mapped through a seeded
    random projection into ``dim`` channels.  Frame count mimics the real
    extractor: 499 frames for 10 s at 16 kHz.  The projection depends only
    on ``(dim, seed)``, so one seed plays the role of one frozen backbone
    across a whole corpus.
    """
    if clip.sample_rate_hz != _PSEUDO_RATE:
        raise InvalidInputError(
            f"pseudo extractor expects {_PSEUDO_RATE} Hz input, got {clip.sample_rate_hz}"
        )
    if clip.samples.size != _PSEUDO_SAMPLES:
        raise InvalidInputError(
            f"pseudo extractor expects a fixed {_PSEUDO_SAMPLES}-sample clip, "
            f"got {clip.samples.size}"
        )
    if dim < 1:
        raise InvalidInputError("dim must be positive")

    n_frames = clip.samples.size // _FRAME_LEN - 1
    x = np.asarray(clip.samples, dtype=np.float64)
    frames = x[: n_frames * _FRAME_LEN].reshape(n_frames, _FRAME_LEN)

    rms = np.sqrt(np.mean(frames**2, axis=1))
    zcr = np.mean(frames[:, 1:] * frames[:, :-1] < 0, axis=1)
    power = np.abs(np.fft.rfft(frames, axis=1)) ** 2
    # 16 coarse bands over bins 1..160 (DC excluded), 10 bins each.
    bands = power[:, 1 : 1 + _N_BANDS * 10].reshape(n_frames, _N_BANDS, 10).sum(axis=2)
    log_bands = np.log(bands + 1e-10)

    stats = np.concatenate(
        [3.0 * rms[:, None], 3.0 * zcr[:, None], (log_bands + 10.0) / 5.0], axis=1
    )

    rng = np.random.default_rng(seed)
    projection = rng.standard_normal((stats.shape[1], dim)) / np.sqrt(stats.shape[1])
    offset = 0.1 * rng.standard_normal(dim)
    values = (stats @ projection + offset).astype(np.float32)
    return SslFeatureMatrix(values=values, source_model_id=f"pseudo-sslf-seed{seed}")
