"""Manifest ingestion, splits, feature access, and a synthetic MOS corpus.

A corpus is a CSV manifest plus per-utterance files: a WAV under the corpus
root and an SSL feature file in the SSLF format.  The synthetic generator
builds complete desk-scale corpora whose quality label is a documented
function of the degradation recipe, with part of the signal living above
8 kHz so the spectrogram branch has something the 16 kHz features cannot
see.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import dsp, sslfeat
from .errors import (
    DatasetError,
    DuplicateUtteranceError,
    InvalidInputError,
    ManifestSchemaError,
    ManifestValidationError,
    MoskitError,
)
from .utils import derive_seed

MANIFEST_COLUMNS = (
    "utterance_id",
    "audio_path",
    "ssl_feature_path",
    "mos_label",
    "system_id",
    "sample_rate_hz",
    "n_ratings",
)

#: Degradation grid of the synthetic corpus.
SNR_LEVELS_DB = (0, 5, 10, 20, 30)
LOWPASS_KHZ = (4, 8, 12, 24)
CARRIER_RATES = (16000, 24000, 48000)


@dataclass(frozen=True)
class ManifestEntry:
    utterance_id: str
    audio_path: str
    ssl_feature_path: str
    mos_label: float
    system_id: Optional[str]
    sample_rate_hz: int
    n_ratings: Optional[int] = None


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float
    seed: int
    level: str = "system"

    def __post_init__(self):
        if not (0.0 < self.train_fraction < 1.0):
            raise InvalidInputError("train_fraction must lie strictly between 0 and 1")
        if self.level not in ("system", "utterance"):
            raise InvalidInputError(f"unknown split level {self.level!r}")


def load_manifest(path) -> list[ManifestEntry]:
    """Read and validate a manifest CSV.

    Rejects missing columns, out-of-range MOS labels, disallowed sampling
    rates, and duplicate utterance ids; validation errors name the row.
    """
    path = Path(path)
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            raise ManifestSchemaError(f"{path}: empty manifest")
        missing = [c for c in MANIFEST_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise ManifestSchemaError(f"{path}: missing columns {missing}")
        entries = []
        seen = set()
        for i, row in enumerate(reader, start=2):
            where = f"{path} row {i}"
            utt = (row["utterance_id"] or "").strip()
            if not utt:
                raise ManifestValidationError(f"{where}: empty utterance_id")
            if utt in seen:
                raise DuplicateUtteranceError(f"{where}: duplicate utterance_id {utt!r}")
            seen.add(utt)
            try:
                mos = float(row["mos_label"])
                rate = int(row["sample_rate_hz"])
            except (TypeError, ValueError) as exc:
                raise ManifestValidationError(f"{where}: {exc}") from exc
            if not (1.0 <= mos <= 5.0):
                raise ManifestValidationError(f"{where}: mos_label {mos} outside [1, 5]")
            if rate not in dsp.ALLOWED_RATES:
                raise ManifestValidationError(f"{where}: sample_rate_hz {rate} not allowed")
            audio_path = (row["audio_path"] or "").strip()
            feat_path = (row["ssl_feature_path"] or "").strip()
            if not audio_path or not feat_path:
                raise ManifestValidationError(f"{where}: empty path field")
            system = (row["system_id"] or "").strip() or None
            n_ratings_text = (row["n_ratings"] or "").strip()
            n_ratings = int(n_ratings_text) if n_ratings_text else None
            entries.append(
                ManifestEntry(
                    utterance_id=utt,
                    audio_path=audio_path,
                    ssl_feature_path=feat_path,
                    mos_label=mos,
                    system_id=system,
                    sample_rate_hz=rate,
                    n_ratings=n_ratings,
                )
            )
    return entries


def write_manifest(entries: Sequence[ManifestEntry], path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(MANIFEST_COLUMNS)
        for e in entries:
            writer.writerow(
                [
                    e.utterance_id,
                    e.audio_path,
                    e.ssl_feature_path,
                    f"{e.mos_label:.6f}",
                    e.system_id or "",
                    e.sample_rate_hz,
                    e.n_ratings if e.n_ratings is not None else "",
                ]
            )


def split_by_system(entries: Sequence[ManifestEntry], spec: SplitSpec):
    """Seeded train/validation split; at system level whole systems move together.

    The train side receives ``ceil(train_fraction * n_systems)`` systems
    (or utterances, at utterance level).  Output preserves input order.
    """
    rng = np.random.default_rng(derive_seed(spec.seed, "split", spec.level))
    if spec.level == "utterance":
        perm = rng.permutation(len(entries))
        n_train = math.ceil(spec.train_fraction * len(entries))
        train_idx = set(perm[:n_train].tolist())
        train = [e for i, e in enumerate(entries) if i in train_idx]
        val = [e for i, e in enumerate(entries) if i not in train_idx]
        return train, val

    systems = []
    for e in entries:
        if e.system_id is None:
            raise InvalidInputError(
                f"system-level split requires system_id on every entry; "
                f"{e.utterance_id!r} has none"
            )
        if e.system_id not in systems:
            systems.append(e.system_id)
    perm = rng.permutation(len(systems))
    n_train = math.ceil(spec.train_fraction * len(systems))
    train_systems = {systems[i] for i in perm[:n_train]}
    train = [e for e in entries if e.system_id in train_systems]
    val = [e for e in entries if e.system_id not in train_systems]
    return train, val


# ---------------------------------------------------------------------------
# Synthetic corpus
# ---------------------------------------------------------------------------


def pseudo_mos(snr_db: float, lowpass_khz: float, clipped: bool) -> float:
    """Quality score of a degradation recipe, before rater noise.

    Monotone non-decreasing in SNR and bandwidth; clipping costs a fixed
    bonus.  The clean corner (30 dB, 24 kHz, unclipped) scores 5.0, the
    worst corner 1.0.
    """
    snr_score = min(max(snr_db, 0.0), 30.0) / 30.0
    bw = min(max(lowpass_khz, 4.0), 24.0)
    bw_score = math.log2(bw / 4.0) / math.log2(24.0 / 4.0)
    return 1.0 + 1.0 * snr_score + 2.6 * bw_score + 0.2 * (0.0 if clipped else 1.0)


#: Fixed carrier grid: 16 log-spaced tones, 200 Hz .. 21.6 kHz.  The top
#: four sit above 8 kHz, so they are audible only to the 48 kHz branch.
CARRIER_TONES_HZ = tuple(200.0 * (21600.0 / 200.0) ** (j / 15.0) for j in range(16))


def _synth_carrier_tones(rng, rate, seconds, keep_below_hz):
    """Amplitude-modulated carrier on the fixed tone grid.

    Per-utterance randomness enters through amplitude jitter, phases and
    the modulation contour; tone frequencies stay fixed so degradations
    show up at known spectrogram bins.  Tones above ``keep_below_hz`` or
    above 0.45 * rate are dropped analytically, which is the low-pass part
    of the degradation recipe.
    """
    n = int(round(seconds * rate))
    t = np.arange(n) / rate
    freqs = np.array(CARRIER_TONES_HZ)
    amps = (freqs / 1000.0) ** -0.3 * rng.uniform(0.7, 1.3, size=freqs.size)
    phases = rng.uniform(0, 2 * np.pi, size=freqs.size)
    keep = (freqs <= keep_below_hz) & (freqs <= 0.45 * rate)
    x = np.zeros(n)
    for f, a, p in zip(freqs[keep], amps[keep], phases[keep]):
        x += a * np.sin(2 * np.pi * f * t + p)
    rms = np.sqrt(np.mean(x**2))
    if rms > 0:
        x = x / rms * 0.1
    syllabic = 0.55 + 0.45 * np.sin(2 * np.pi * rng.uniform(2.0, 5.0) * t + rng.uniform(0, 2 * np.pi))
    return x * syllabic


def _degrade(rng: np.random.Generator, carrier: np.ndarray, snr_db: float, clipped: bool):
    signal_power = np.mean(carrier**2)
    noise_power = signal_power * 10.0 ** (-snr_db / 10.0)
    y = carrier + rng.standard_normal(carrier.size) * np.sqrt(noise_power)
    if clipped:
        threshold = 2.0 * np.sqrt(np.mean(y**2))
        y = np.clip(y, -threshold, threshold)
    peak = np.max(np.abs(y))
    if peak > 0:
        y = y / peak * 0.95
    return y


@dataclass(frozen=True)
class SystemRecipe:
    system_id: str
    snr_db: float
    lowpass_khz: float
    clipped: bool
    rate_hz: int


def generate_synthetic(
    n_systems: int,
    utts_per_system: int,
    seed: int,
    out_dir,
    rates: Sequence[int] = CARRIER_RATES,
    feature_dim: int = sslfeat.DEFAULT_DIM,
    duration_seconds: float = 10.0,
    rater_noise_std: float = 0.1,
    label_scale: float = 1.0,
    label_offset: float = 0.0,
) -> Path:
    """Write a complete synthetic corpus and return the manifest path.

    Layout under ``out_dir``: ``wav/`` (PCM16), ``sslf/`` (SSL features from
    the pseudo extractor, one projection seed for the whole corpus), and
    ``manifest.csv``.  Each system fixes one degradation recipe; labels are
    ``label_scale * pseudo_mos(recipe) + label_offset`` plus seeded rater
    noise, clamped to [1, 5].  Byte-identical for identical arguments.
    """
    if n_systems < 1 or utts_per_system < 1:
        raise InvalidInputError("n_systems and utts_per_system must be positive")
    for r in rates:
        if r not in dsp.ALLOWED_RATES:
            raise InvalidInputError(f"rate {r} not in {dsp.ALLOWED_RATES}")

    out_dir = Path(out_dir)
    (out_dir / "wav").mkdir(parents=True, exist_ok=True)
    (out_dir / "sslf").mkdir(parents=True, exist_ok=True)
    extractor_seed = derive_seed(seed, "pseudo-backbone")

    entries = []
    for s in range(n_systems):
        sys_rng = np.random.default_rng(derive_seed(seed, "system", s))
        recipe = SystemRecipe(
            system_id=f"sys{s:03d}",
            snr_db=float(sys_rng.choice(SNR_LEVELS_DB)),
            lowpass_khz=float(sys_rng.choice(LOWPASS_KHZ)),
            clipped=bool(sys_rng.integers(0, 2)),
            rate_hz=int(sys_rng.choice(list(rates))),
        )
        base_mos = pseudo_mos(recipe.snr_db, recipe.lowpass_khz, recipe.clipped)
        for u in range(utts_per_system):
            utt_rng = np.random.default_rng(derive_seed(seed, "utt", s, u))
            carrier = _synth_carrier_tones(
                utt_rng, recipe.rate_hz, duration_seconds, recipe.lowpass_khz * 1000.0
            )
            degraded = _degrade(utt_rng, carrier, recipe.snr_db, recipe.clipped)
            # Quantize through PCM16 so on-disk audio and features agree.
            quantized = np.clip(np.round(degraded * 32768.0), -32768, 32767) / 32768.0
            utt_id = f"{recipe.system_id}_utt{u:03d}"
            clip = dsp.AudioClip(samples=quantized, sample_rate_hz=recipe.rate_hz)
            dsp.write_wav_pcm16(out_dir / "wav" / f"{utt_id}.wav", clip)

            at16k = dsp.fit_length(dsp.resample(clip, 16000), duration_seconds)
            feats = sslfeat.pseudo_extract(at16k, dim=feature_dim, seed=extractor_seed)
            sslfeat.write_features_file(feats, out_dir / "sslf" / f"{utt_id}.sslf")

            label = label_scale * base_mos + label_offset
            label += float(utt_rng.normal(0.0, rater_noise_std))
            entries.append(
                ManifestEntry(
                    utterance_id=utt_id,
                    audio_path=f"wav/{utt_id}.wav",
                    ssl_feature_path=f"sslf/{utt_id}.sslf",
                    mos_label=float(np.clip(label, 1.0, 5.0)),
                    system_id=recipe.system_id,
                    sample_rate_hz=recipe.rate_hz,
                    n_ratings=10,
                )
            )

    manifest_path = out_dir / "manifest.csv"
    write_manifest(entries, manifest_path)
    return manifest_path


# ---------------------------------------------------------------------------
# Feature access for training and evaluation
# ---------------------------------------------------------------------------


class UtteranceDataset:
    """Resolves manifest entries to model-ready feature arrays.

    Spectrograms come from an optional ``.npy`` cache directory (written by
    ``featurize``) or are computed from the WAV on demand; both paths
    quantize to float32 so results do not depend on cache presence.  SSL
    features are read from SSLF files.  Small corpora can be pinned in
    memory with ``keep_in_memory``.
    """

    def __init__(
        self,
        entries: Sequence[ManifestEntry],
        root_dir,
        spec_cache_dir=None,
        stft_cfg: dsp.StftConfig = dsp.StftConfig(),
        target_seconds: float = 10.0,
        keep_in_memory: bool = False,
    ):
        if not entries:
            raise InvalidInputError("dataset must contain at least one entry")
        self.entries = list(entries)
        self.root_dir = Path(root_dir)
        self.spec_cache_dir = Path(spec_cache_dir) if spec_cache_dir else None
        self.stft_cfg = stft_cfg
        self.target_seconds = target_seconds
        self._keep = keep_in_memory
        self._ssl_cache: dict = {}
        self._spec_cache: dict = {}
        self._ssl_dim: Optional[int] = None

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def labels(self) -> np.ndarray:
        return np.array([e.mos_label for e in self.entries], dtype=np.float64)

    def subset(self, entries: Sequence[ManifestEntry]) -> "UtteranceDataset":
        return UtteranceDataset(
            entries,
            self.root_dir,
            spec_cache_dir=self.spec_cache_dir,
            stft_cfg=self.stft_cfg,
            target_seconds=self.target_seconds,
            keep_in_memory=self._keep,
        )

    def ssl(self, i: int) -> np.ndarray:
        e = self.entries[i]
        cached = self._ssl_cache.get(i)
        if cached is not None:
            return cached
        path = self.root_dir / e.ssl_feature_path
        try:
            m = sslfeat.read_features_file(path)
        except OSError as exc:
            raise DatasetError(f"utterance {e.utterance_id!r}: cannot read {path}: {exc}") from exc
        except MoskitError as exc:
            raise DatasetError(f"utterance {e.utterance_id!r}: bad feature file {path}: {exc}") from exc
        if self._ssl_dim is None:
            self._ssl_dim = m.dim
        elif m.dim != self._ssl_dim:
            raise DatasetError(
                f"utterance {e.utterance_id!r}: feature dim {m.dim} differs from "
                f"dataset dim {self._ssl_dim}"
            )
        if self._keep:
            self._ssl_cache[i] = m.values
        return m.values

    def spectrogram(self, i: int) -> np.ndarray:
        e = self.entries[i]
        cached = self._spec_cache.get(i)
        if cached is not None:
            return cached
        values = None
        if self.spec_cache_dir is not None:
            npy = self.spec_cache_dir / f"{e.utterance_id}.npy"
            if npy.exists():
                values = np.load(npy)
        if values is None:
            values = self.compute_spectrogram(i)
        if self._keep:
            self._spec_cache[i] = values
        return values

    def compute_spectrogram(self, i: int) -> np.ndarray:
        e = self.entries[i]
        path = self.root_dir / e.audio_path
        try:
            with open(path, "rb") as f:
                clip = dsp.decode_wav(f.read())
        except OSError as exc:
            raise DatasetError(f"utterance {e.utterance_id!r}: cannot read {path}: {exc}") from exc
        except MoskitError as exc:
            raise DatasetError(f"utterance {e.utterance_id!r}: bad audio {path}: {exc}") from exc
        clip = dsp.fit_length(dsp.resample(clip, 48000), self.target_seconds)
        spec = dsp.stft_log_magnitude(clip, self.stft_cfg)
        return spec.values.astype(np.float32)

    def write_spec_cache(self, cache_dir) -> int:
        """Precompute spectrograms into ``cache_dir``; returns count written."""
        cache_dir = Path(cache_dir)
        cache_dir.mkdir(parents=True, exist_ok=True)
        for i, e in enumerate(self.entries):
            np.save(cache_dir / f"{e.utterance_id}.npy", self.compute_spectrogram(i))
        return len(self.entries)

    def validate_features(self) -> int:
        """Round-trip every SSL feature file through the format validator."""
        for i in range(len(self.entries)):
            self.ssl(i)
        return len(self.entries)


def assemble_batch(dataset: UtteranceDataset, indices, need_spec: bool, dtype=np.float64):
    """Stack features for ``indices`` into model-ready arrays.

    All utterances in a batch must share feature shapes, which the fixed
    10 s pipeline guarantees.
    """
    def stack(arrays, what):
        shapes = {a.shape for a in arrays}
        if len(shapes) != 1:
            raise DatasetError(f"batch mixes {what} shapes {sorted(shapes)}")
        out = np.empty((len(arrays),) + arrays[0].shape, dtype=dtype)
        for j, a in enumerate(arrays):
            out[j] = a
        return out

    ssl = stack([dataset.ssl(i) for i in indices], "SSL feature")
    spec = None
    if need_spec:
        spec = stack([dataset.spectrogram(i) for i in indices], "spectrogram")
    labels = np.array([dataset.entries[i].mos_label for i in indices], dtype=dtype)
    return ssl, spec, labels
