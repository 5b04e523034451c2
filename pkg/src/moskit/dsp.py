"""Waveform front-end: WAV decoding, resampling, length fitting, log-STFT.

All operations are pure functions of their inputs and hold no shared state,
so they are safe to call concurrently.  Audio is represented as float64
samples in the nominal range [-1, 1].
"""

from __future__ import annotations

import math
import struct
import wave
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.signal import firwin, get_window, resample_poly

from .errors import AudioFormatError, InvalidInputError, UnsupportedAudioError

#: Sampling rates accepted at manifest ingestion.
ALLOWED_RATES = (8000, 16000, 24000, 44100, 48000)

#: Taps per polyphase branch of the resampling filter.
_TAPS_PER_PHASE = 64
_KAISER_BETA = 8.0


@dataclass(frozen=True)
class AudioClip:
    """Mono waveform with its sampling rate."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise InvalidInputError(f"sample rate must be positive, got {self.sample_rate_hz}")

    @property
    def duration_seconds(self) -> float:
        return self.samples.size / self.sample_rate_hz


@dataclass(frozen=True)
class StftConfig:
    """Analysis parameters for the log-magnitude spectrogram.

    Defaults give 161 frequency bins and a 2999-frame map for 10 s of
    48 kHz audio.
    """

    window_len: int = 320
    hop_len: int = 160
    fft_size: int = 320
    window_kind: str = "hann"
    log_floor_eps: float = 1e-8

    def __post_init__(self):
        if not (0 < self.window_len <= self.fft_size):
            raise InvalidInputError("require 0 < window_len <= fft_size")
        if not (0 < self.hop_len <= self.window_len):
            raise InvalidInputError("require 0 < hop_len <= window_len")
        if self.log_floor_eps <= 0:
            raise InvalidInputError("log_floor_eps must be positive")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1


@dataclass(frozen=True)
class LogSpectrogram:
    """Log-magnitude STFT values, shape [n_bins, n_frames]."""

    values: np.ndarray
    source_rate_hz: int

    @property
    def n_bins(self) -> int:
        return self.values.shape[0]

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]


def _read_exact(data: bytes, offset: int, size: int, what: str) -> bytes:
    if offset + size > len(data):
        raise AudioFormatError(f"truncated WAV: {what} runs past end of file")
    return data[offset:offset + size]


def decode_wav(data: bytes) -> AudioClip:
    """Decode a RIFF/WAVE byte string into a mono :class:`AudioClip`.

    Supports PCM 16-bit, PCM 24-bit and IEEE float32, 1 or 2 channels.
    Stereo is averaged to mono; integer samples are scaled by the full
    negative range (32768 for PCM16) so values land in [-1, 1].
    """
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise AudioFormatError("not a RIFF/WAVE file")

    fmt = None
    payload = None
    offset = 12
    while offset + 8 <= len(data):
        chunk_id = data[offset:offset + 4]
        (chunk_size,) = struct.unpack_from("<I", data, offset + 4)
        body_off = offset + 8
        if chunk_id == b"fmt ":
            if chunk_size < 16:
                raise AudioFormatError("fmt chunk too small")
            fmt = struct.unpack_from("<HHIIHH", data, body_off)
        elif chunk_id == b"data":
            payload = _read_exact(data, body_off, chunk_size, "data chunk")
        offset = body_off + chunk_size + (chunk_size & 1)

    if fmt is None:
        raise AudioFormatError("missing fmt chunk")
    if payload is None:
        raise AudioFormatError("missing data chunk")

    audio_format, n_channels, sample_rate, _byte_rate, _block_align, bits = fmt
    if n_channels not in (1, 2):
        raise UnsupportedAudioError(f"unsupported channel count {n_channels}")

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
        raw = np.frombuffer(payload[: len(payload) - len(payload) % 4], dtype="<f4")
        samples = raw.astype(np.float64)
    else:
        raise UnsupportedAudioError(f"unsupported codec: format={audio_format} bits={bits}")

    if n_channels == 2:
        usable = samples.size - samples.size % 2
        samples = samples[:usable].reshape(-1, 2).mean(axis=1)

    return AudioClip(samples=samples, sample_rate_hz=int(sample_rate))


def write_wav_pcm16(path, clip: AudioClip) -> None:
    """Write a clip as mono PCM16.  Samples are clipped to [-1, 1] first."""
    scaled = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(clip.sample_rate_hz)
        wf.writeframes(scaled.tobytes())


@lru_cache(maxsize=32)
def _polyphase_filter(up: int, down: int) -> np.ndarray:
    # Kaiser-windowed sinc, cut at the tighter of the two Nyquists.
    # resample_poly applies the up-gain itself when handed explicit taps.
    numtaps = _TAPS_PER_PHASE * up + 1
    cutoff = 1.0 / max(up, down)
    return firwin(numtaps, cutoff, window=("kaiser", _KAISER_BETA))


def resample(clip: AudioClip, target_rate_hz: int) -> AudioClip:
    """Band-limited polyphase resampling to ``target_rate_hz``.

    The output has exactly ``round(n * target / source)`` samples.  When the
    target equals the source rate the clip is returned unchanged.
    """
    if target_rate_hz <= 0:
        raise InvalidInputError("target rate must be positive")
    if clip.samples.size == 0:
        raise InvalidInputError("cannot resample an empty clip")
    if target_rate_hz == clip.sample_rate_hz:
        return clip

    ratio = Fraction(target_rate_hz, clip.sample_rate_hz)
    up, down = ratio.numerator, ratio.denominator
    h = _polyphase_filter(up, down)
    out = resample_poly(clip.samples.astype(np.float64, copy=False), up, down, window=h)

    n_out = round(Fraction(clip.samples.size) * ratio)
    if out.size > n_out:
        out = out[:n_out]
    elif out.size < n_out:
        out = np.concatenate([out, np.zeros(n_out - out.size)])
    return AudioClip(samples=out, sample_rate_hz=target_rate_hz)


def fit_length(clip: AudioClip, target_seconds: float) -> AudioClip:
    """Fix the duration by repetitive padding or head cropping.

    Shorter clips are tiled end-to-end then truncated; longer clips keep
    their first ``round(target_seconds * rate)`` samples.  Deterministic and
    idempotent.
    """
    if clip.samples.size == 0:
        raise InvalidInputError("cannot fit an empty clip")
    if target_seconds <= 0:
        raise InvalidInputError("target_seconds must be positive")
    n_target = int(round(target_seconds * clip.sample_rate_hz))
    n = clip.samples.size
    if n == n_target:
        return clip
    if n > n_target:
        out = clip.samples[:n_target]
    else:
        reps = -(-n_target // n)
        out = np.tile(clip.samples, reps)[:n_target]
    return AudioClip(samples=out, sample_rate_hz=clip.sample_rate_hz)


def _stft_window(kind: str, length: int) -> np.ndarray:
    try:
        return get_window(kind, length, fftbins=True)
    except ValueError as exc:
        raise InvalidInputError(f"unknown window kind {kind!r}") from exc


def stft_log_magnitude(clip: AudioClip, cfg: StftConfig = StftConfig()) -> LogSpectrogram:
    """Log-magnitude spectrogram of a 48 kHz clip.

    Frame ``t`` covers samples ``[t*hop, t*hop + window_len)`` with no
    center padding, so ``n_frames = 1 + (n - window_len) // hop``.  Each
    value is ``log(|X| + log_floor_eps)``; the floor keeps silence finite.
    """
    if clip.sample_rate_hz != 48000:
        raise InvalidInputError(
            f"spectrogram branch expects 48000 Hz input, got {clip.sample_rate_hz}"
        )
    x = np.asarray(clip.samples, dtype=np.float64)
    if x.size < cfg.window_len:
        raise InvalidInputError(
            f"clip of {x.size} samples is shorter than one window ({cfg.window_len})"
        )
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.window_len)[:: cfg.hop_len]
    window = _stft_window(cfg.window_kind, cfg.window_len)
    spectrum = np.fft.rfft(frames * window, n=cfg.fft_size, axis=1)
    values = np.log(np.abs(spectrum) + cfg.log_floor_eps).T
    return LogSpectrogram(values=values, source_rate_hz=clip.sample_rate_hz)


def frame_count(n_samples: int, cfg: StftConfig) -> int:
    """Number of STFT frames for an ``n_samples`` signal under ``cfg``."""
    if n_samples < cfg.window_len:
        return 0
    return 1 + (n_samples - cfg.window_len) // cfg.hop_len


def sine(freq_hz: float, seconds: float, rate_hz: int, amplitude: float = 1.0) -> AudioClip:
    """Unit-test helper: a pure sine tone."""
    t = np.arange(int(round(seconds * rate_hz))) / rate_hz
    return AudioClip(samples=amplitude * np.sin(2 * math.pi * freq_hz * t), sample_rate_hz=rate_hz)
