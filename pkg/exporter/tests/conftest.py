"""Fixtures: tiny WAV corpus written with the standard library only."""

import csv
import struct
import wave

import numpy as np
import pytest


def write_wav(path, samples, rate):
    scaled = np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(rate)
        wf.writeframes(scaled.tobytes())


@pytest.fixture(scope="session")
def wav_corpus(tmp_path_factory):
    """Three clips at different rates/lengths plus a manifest row with missing audio."""
    root = tmp_path_factory.mktemp("wav_corpus")
    (root / "wav").mkdir()
    rng = np.random.default_rng(7)
    specs = [
        ("utt_16k_10s", 16000, 10.0),
        ("utt_48k_3s", 48000, 3.0),
        ("utt_24k_12s", 24000, 12.0),
    ]
    rows = []
    for utt, rate, seconds in specs:
        t = np.arange(int(rate * seconds)) / rate
        x = 0.3 * np.sin(2 * np.pi * 440 * t) + 0.05 * rng.standard_normal(t.size)
        write_wav(root / "wav" / f"{utt}.wav", x, rate)
        rows.append(
            {
                "utterance_id": utt,
                "audio_path": f"wav/{utt}.wav",
                "ssl_feature_path": f"sslf/{utt}.sslf",
                "mos_label": "3.0",
                "system_id": "sysA",
                "sample_rate_hz": str(rate),
                "n_ratings": "",
            }
        )
    rows.append(
        {
            "utterance_id": "utt_missing",
            "audio_path": "wav/not_there.wav",
            "ssl_feature_path": "sslf/utt_missing.sslf",
            "mos_label": "2.0",
            "system_id": "sysA",
            "sample_rate_hz": "16000",
            "n_ratings": "",
        }
    )
    manifest = root / "manifest.csv"
    with open(manifest, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    return root, manifest
