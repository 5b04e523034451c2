"""Batch export: manifest in, one SSLF file per utterance out.

Per-utterance failures (missing or unreadable audio) are logged and
skipped so one bad row cannot sink a long job; a backbone that fails to
load aborts immediately.  The export log records the backbone identity,
layer, output dim, and every skip with its reason.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import audio, sslf
from .backbone import DEFAULT_LAYER, Wav2Vec2Backbone
from .errors import AudioError, ManifestError

log = logging.getLogger("sslf_exporter")

REQUIRED_COLUMNS = ("utterance_id", "audio_path", "ssl_feature_path")


@dataclass(frozen=True)
class ExportJob:
    manifest_path: str
    output_dir: str
    backbone_spec: str
    layer_index: int = DEFAULT_LAYER
    batch_size: int = 2
    device: str = "cpu"


@dataclass
class ExportLog:
    model_id: str
    layer_index: int
    dim: int
    written: list = field(default_factory=list)
    skipped: list = field(default_factory=list)

    @property
    def n_ok(self) -> int:
        return len(self.written)

    @property
    def n_skipped(self) -> int:
        return len(self.skipped)

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "layer_index": self.layer_index,
            "dim": self.dim,
            "n_ok": self.n_ok,
            "n_skipped": self.n_skipped,
            "written": self.written,
            "skipped": self.skipped,
        }


def read_manifest_rows(path) -> list[dict]:
    path = Path(path)
    try:
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames is None:
                raise ManifestError(f"{path}: empty manifest")
            missing = [c for c in REQUIRED_COLUMNS if c not in reader.fieldnames]
            if missing:
                raise ManifestError(f"{path}: missing columns {missing}")
            return list(reader)
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc


def _output_path(out_dir: Path, row: dict) -> Path:
    rel = (row.get("ssl_feature_path") or "").strip()
    if rel and not Path(rel).is_absolute():
        return out_dir / Path(rel).name
    return out_dir / f"{row['utterance_id']}.sslf"


def run_export(job: ExportJob) -> ExportLog:
    backbone = Wav2Vec2Backbone.load(job.backbone_spec, device=job.device)
    rows = read_manifest_rows(job.manifest_path)
    root = Path(job.manifest_path).parent
    out_dir = Path(job.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = ExportLog(model_id=backbone.model_id, layer_index=job.layer_index, dim=backbone.dim)

    pending: list = []

    def flush():
        if not pending:
            return
        batch = np.stack([wave for _, _, wave in pending])
        features = backbone.extract(batch, job.layer_index)
        for (utt, out_path, _), mat in zip(pending, features):
            sslf.write_file(mat, job.layer_index, backbone.model_id, out_path)
            report.written.append(utt)
            log.info("wrote %s (%d x %d)", out_path, mat.shape[0], mat.shape[1])
        pending.clear()

    for row in rows:
        utt = (row.get("utterance_id") or "").strip() or "<unnamed>"
        wav_path = root / (row.get("audio_path") or "")
        try:
            wave = audio.prepare(wav_path.read_bytes())
        except (OSError, AudioError) as exc:
            log.warning("skipping %s: %s", utt, exc)
            report.skipped.append({"utterance_id": utt, "reason": str(exc)})
            continue
        pending.append((utt, _output_path(out_dir, row), wave))
        if len(pending) >= job.batch_size:
            flush()
    flush()
    return report


def write_log(report: ExportLog, path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True))
