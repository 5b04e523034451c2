"""Front-end tests: WAV decode, resampling, length fitting, log-STFT.

The STFT oracle below is a literal per-frame DFT built from cos/sin sums,
independent of any FFT implementation.
"""

import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from moskit import dsp
from moskit.errors import AudioFormatError, InvalidInputError, UnsupportedAudioError


def make_wav(samples, rate, *, bits=16, fmt=1, channels=1) -> bytes:
    """Build a RIFF/WAVE byte string by hand."""
    if fmt == 1 and bits == 16:
        payload = np.asarray(samples, dtype="<i2").tobytes()
    elif fmt == 1 and bits == 24:
        ints = np.asarray(samples, dtype=np.int32)
        b = np.zeros((ints.size, 3), dtype=np.uint8)
        b[:, 0] = ints & 0xFF
        b[:, 1] = (ints >> 8) & 0xFF
        b[:, 2] = (ints >> 16) & 0xFF
        payload = b.tobytes()
    elif fmt == 3 and bits == 32:
        payload = np.asarray(samples, dtype="<f4").tobytes()
    else:
        raise ValueError("unsupported test combination")
    block_align = channels * bits // 8
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    header += b"fmt " + struct.pack(
        "<IHHIIHH", 16, fmt, channels, rate, rate * block_align, block_align, bits
    )
    header += b"data" + struct.pack("<I", len(payload))
    return header + payload


class TestDecodeWav:
    def test_silence_one_second(self):
        clip = dsp.decode_wav(make_wav(np.zeros(16000, dtype=np.int16), 16000))
        assert clip.sample_rate_hz == 16000
        assert clip.samples.shape == (16000,)
        assert np.all(clip.samples == 0.0)

    def test_stereo_channels_average_to_zero(self):
        # Interleaved (+0.5, -0.5) everywhere.
        inter = np.empty(200, dtype=np.int16)
        inter[0::2] = 16384
        inter[1::2] = -16384
        clip = dsp.decode_wav(make_wav(inter, 8000, channels=2))
        assert clip.samples.shape == (100,)
        np.testing.assert_allclose(clip.samples, 0.0)

    def test_pcm16_scaling(self):
        # 16384 / 32768 = 0.5 by the PCM16 scaling rule.
        clip = dsp.decode_wav(make_wav(np.array([16384], dtype=np.int16), 16000))
        assert abs(clip.samples[0] - 0.5) < 1e-4

    def test_pcm24_scaling(self):
        clip = dsp.decode_wav(make_wav(np.array([1 << 22, -(1 << 22)]), 48000, bits=24))
        np.testing.assert_allclose(clip.samples, [0.5, -0.5])

    def test_float32_passthrough(self):
        clip = dsp.decode_wav(make_wav([0.25, -0.75], 48000, bits=32, fmt=3))
        np.testing.assert_allclose(clip.samples, [0.25, -0.75], atol=1e-7)

    def test_malformed_header(self):
        with pytest.raises(AudioFormatError):
            dsp.decode_wav(b"OGGS" + b"\x00" * 40)

    def test_unsupported_codec(self):
        data = bytearray(make_wav(np.zeros(10, dtype=np.int16), 16000))
        data[20:22] = struct.pack("<H", 7)  # mu-law
        with pytest.raises(UnsupportedAudioError):
            dsp.decode_wav(bytes(data))

    def test_truncated_data_chunk(self):
        data = make_wav(np.zeros(100, dtype=np.int16), 16000)
        with pytest.raises(AudioFormatError):
            dsp.decode_wav(data[:-10])

    def test_roundtrip_through_writer(self, tmp_path):
        x = np.linspace(-0.9, 0.9, 321)
        dsp.write_wav_pcm16(tmp_path / "t.wav", dsp.AudioClip(x, 24000))
        clip = dsp.decode_wav((tmp_path / "t.wav").read_bytes())
        assert clip.sample_rate_hz == 24000
        np.testing.assert_allclose(clip.samples, x, atol=1.0 / 32768)


class TestResample:
    def test_three_to_one_length(self):
        clip = dsp.AudioClip(np.zeros(480000), 48000)
        out = dsp.resample(clip, 16000)
        assert out.samples.shape == (160000,)
        assert out.sample_rate_hz == 16000

    def test_identity_same_rate(self):
        x = np.random.default_rng(0).standard_normal(1000)
        clip = dsp.AudioClip(x, 24000)
        out = dsp.resample(clip, 24000)
        np.testing.assert_array_equal(out.samples, x)

    def test_length_is_rounded_ratio(self):
        for n, src, dst in [(7, 44100, 48000), (33333, 48000, 44100), (1001, 8000, 24000)]:
            out = dsp.resample(dsp.AudioClip(np.zeros(n), src), dst)
            assert out.samples.size == round(n * dst / src)

    def test_sine_passband_preserved(self):
        # FFT peak-bin oracle on the resampled signal.
        clip = dsp.sine(1000.0, 1.0, 48000)
        out = dsp.resample(clip, 16000)
        spectrum = np.abs(np.fft.rfft(out.samples))
        peak_hz = np.argmax(spectrum) * 16000 / out.samples.size
        assert abs(peak_hz - 1000.0) < 2.0
        rms_in = np.sqrt(np.mean(clip.samples**2))
        rms_out = np.sqrt(np.mean(out.samples**2))
        assert abs(rms_out - rms_in) / rms_in < 0.01

    def test_linearity(self, rng):
        x = rng.standard_normal(4800)
        y = rng.standard_normal(4800)
        a, b = 0.7, -1.3
        lhs = dsp.resample(dsp.AudioClip(a * x + b * y, 48000), 16000).samples
        rhs = a * dsp.resample(dsp.AudioClip(x, 48000), 16000).samples
        rhs = rhs + b * dsp.resample(dsp.AudioClip(y, 48000), 16000).samples
        assert np.sqrt(np.mean((lhs - rhs) ** 2)) < 1e-6

    def test_empty_clip_rejected(self):
        with pytest.raises(InvalidInputError):
            dsp.resample(dsp.AudioClip(np.zeros(0), 16000), 48000)


class TestFitLength:
    def test_tiling(self):
        clip = dsp.AudioClip(np.array([1.0, 2.0, 3.0]), 1)
        out = dsp.fit_length(clip, 7.0)
        np.testing.assert_array_equal(out.samples, [1, 2, 3, 1, 2, 3, 1])

    def test_head_crop(self):
        clip = dsp.AudioClip(np.arange(12.0), 1)
        out = dsp.fit_length(clip, 7.0)
        np.testing.assert_array_equal(out.samples, np.arange(7.0))

    def test_exact_length_unchanged(self):
        x = np.arange(7.0)
        out = dsp.fit_length(dsp.AudioClip(x, 1), 7.0)
        np.testing.assert_array_equal(out.samples, x)

    @given(n=st.integers(1, 50), target=st.integers(1, 50))
    @settings(max_examples=60, deadline=None)
    def test_idempotent(self, n, target):
        clip = dsp.AudioClip(np.arange(float(n)), 1)
        once = dsp.fit_length(clip, float(target))
        twice = dsp.fit_length(once, float(target))
        assert once.samples.size == target
        np.testing.assert_array_equal(once.samples, twice.samples)


def dft_log_magnitude_oracle(x, cfg):
    """Literal per-frame DFT via cos/sin sums (no FFT)."""
    n_frames = 1 + (x.size - cfg.window_len) // cfg.hop_len
    k = np.arange(cfg.fft_size // 2 + 1)
    n = np.arange(cfg.fft_size)
    angles = 2.0 * math.pi * np.outer(k, n) / cfg.fft_size
    cos_m, sin_m = np.cos(angles), np.sin(angles)
    window = 0.5 - 0.5 * np.cos(2.0 * math.pi * np.arange(cfg.window_len) / cfg.window_len)
    out = np.zeros((k.size, n_frames))
    for t in range(n_frames):
        frame = np.zeros(cfg.fft_size)
        frame[: cfg.window_len] = x[t * cfg.hop_len : t * cfg.hop_len + cfg.window_len] * window
        re = cos_m @ frame
        im = -sin_m @ frame
        out[:, t] = np.log(np.sqrt(re**2 + im**2) + cfg.log_floor_eps)
    return out


class TestStft:
    def test_shape_contract_ten_seconds(self):
        clip = dsp.AudioClip(np.zeros(480000), 48000)
        spec = dsp.stft_log_magnitude(clip)
        assert (spec.n_bins, spec.n_frames) == (161, 2999)
        assert dsp.frame_count(480000, dsp.StftConfig()) == 2999

    def test_zero_input_hits_log_floor(self):
        cfg = dsp.StftConfig()
        spec = dsp.stft_log_magnitude(dsp.AudioClip(np.zeros(1000), 48000), cfg)
        np.testing.assert_allclose(spec.values, math.log(cfg.log_floor_eps))

    def test_matches_dft_oracle(self, rng):
        cfg = dsp.StftConfig()
        for _ in range(3):
            x = rng.standard_normal(48000) * 0.3
            spec = dsp.stft_log_magnitude(dsp.AudioClip(x, 48000), cfg)
            oracle = dft_log_magnitude_oracle(x, cfg)
            assert spec.values.shape == oracle.shape
            assert np.max(np.abs(spec.values - oracle)) < 1e-4

    def test_scaling_shifts_high_magnitude_bins_by_log2(self, rng):
        cfg = dsp.StftConfig()
        x = rng.standard_normal(48000)
        one = dsp.stft_log_magnitude(dsp.AudioClip(x, 48000), cfg).values
        two = dsp.stft_log_magnitude(dsp.AudioClip(2.0 * x, 48000), cfg).values
        strong = one > math.log(1e-3)  # |X| >> eps
        np.testing.assert_allclose((two - one)[strong], math.log(2.0), atol=1e-4)

    def test_wrong_rate_rejected(self):
        with pytest.raises(InvalidInputError):
            dsp.stft_log_magnitude(dsp.AudioClip(np.zeros(16000), 16000))

    def test_too_short_rejected(self):
        with pytest.raises(InvalidInputError):
            dsp.stft_log_magnitude(dsp.AudioClip(np.zeros(100), 48000))

    def test_shape_depends_only_on_length(self, rng):
        cfg = dsp.StftConfig()
        a = dsp.stft_log_magnitude(dsp.AudioClip(rng.standard_normal(5000), 48000), cfg)
        b = dsp.stft_log_magnitude(dsp.AudioClip(np.zeros(5000), 48000), cfg)
        assert a.values.shape == b.values.shape
