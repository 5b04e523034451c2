"""Audio preprocessing for the exporter.

Semantics deliberately mirror the consumer side of the pipeline: WAV is
decoded to mono float64 in [-1, 1], resampled with a Kaiser-windowed
polyphase filter (64 taps per phase), then repetitively padded or
head-cropped to the fixed duration.  Conformance tests hold these to the
consumer's golden vectors elementwise.
"""

from __future__ import annotations

import struct
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.signal import firwin, resample_poly

from .errors import AudioError

TARGET_RATE = 16000
TARGET_SECONDS = 10.0


def decode_wav(data: bytes) -> tuple[np.ndarray, int]:
    """Parse RIFF/WAVE bytes into (mono float64 samples, rate)."""
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise AudioError("not a RIFF/WAVE file")
    fmt = None
    payload = None
    offset = 12
    while offset + 8 <= len(data):
        chunk_id = data[offset : offset + 4]
        (chunk_size,) = struct.unpack_from("<I", data, offset + 4)
        body = offset + 8
        if chunk_id == b"fmt ":
            if chunk_size < 16:
                raise AudioError("fmt chunk too small")
            fmt = struct.unpack_from("<HHIIHH", data, body)
        elif chunk_id == b"data":
            if body + chunk_size > len(data):
                raise AudioError("truncated data chunk")
            payload = data[body : body + chunk_size]
        offset = body + chunk_size + (chunk_size & 1)
    if fmt is None or payload is None:
        raise AudioError("missing fmt or data chunk")
    audio_format, channels, rate, _br, _ba, bits = fmt
    if channels not in (1, 2):
        raise AudioError(f"unsupported channel count {channels}")
    if audio_format == 1 and bits == 16:
        raw = np.frombuffer(payload[: len(payload) - len(payload) % 2], dtype="<i2")
        samples = raw.astype(np.float64) / 32768.0
    elif audio_format == 1 and bits == 24:
        usable = len(payload) - len(payload) % 3
        b = np.frombuffer(payload[:usable], dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        raw = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        raw = np.where(raw >= 1 << 23, raw - (1 << 24), raw)
        samples = raw.astype(np.float64) / float(1 << 23)
    elif audio_format == 3 and bits == 32:
        samples = np.frombuffer(payload[: len(payload) - len(payload) % 4], dtype="<f4").astype(np.float64)
    else:
        raise AudioError(f"unsupported codec: format={audio_format} bits={bits}")
    if channels == 2:
        usable = samples.size - samples.size % 2
        samples = samples[:usable].reshape(-1, 2).mean(axis=1)
    if samples.size == 0:
        raise AudioError("empty audio payload")
    return samples, int(rate)


@lru_cache(maxsize=16)
def _filter(up: int, down: int) -> np.ndarray:
    return firwin(64 * up + 1, 1.0 / max(up, down), window=("kaiser", 8.0))


def resample(samples: np.ndarray, rate: int, target_rate: int) -> np.ndarray:
    """Polyphase resampling; output length is round(n * target / rate)."""
    if rate == target_rate:
        return samples
    ratio = Fraction(target_rate, rate)
    up, down = ratio.numerator, ratio.denominator
    out = resample_poly(samples, up, down, window=_filter(up, down))
    n_out = round(Fraction(samples.size) * ratio)
    if out.size > n_out:
        return out[:n_out]
    if out.size < n_out:
        return np.concatenate([out, np.zeros(n_out - out.size)])
    return out


def fit_length(samples: np.ndarray, rate: int, seconds: float) -> np.ndarray:
    """Tile short inputs end-to-end, head-crop long ones."""
    n_target = int(round(seconds * rate))
    n = samples.size
    if n == n_target:
        return samples
    if n > n_target:
        return samples[:n_target]
    reps = -(-n_target // n)
    return np.tile(samples, reps)[:n_target]


def prepare(data: bytes) -> np.ndarray:
    """Full chain: decode -> 16 kHz -> fixed 10 s.  Returns float32."""
    samples, rate = decode_wav(data)
    samples = resample(samples, rate, TARGET_RATE)
    samples = fit_length(samples, TARGET_RATE, TARGET_SECONDS)
    return samples.astype(np.float32)
