"""Utterance- and system-level metrics: MSE, Pearson LCC, Spearman SRCC.

System-level metrics are computed after aggregating predictions and labels
to per-system means.  Degenerate inputs (constant predictions, too few
points) surface as typed errors from the metric functions and as ``null``
entries with a reason in the report, never as NaN.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from . import model
from .datasets import UtteranceDataset, assemble_batch
from .errors import DegenerateInputError, InvalidInputError


@dataclass(frozen=True)
class EvalPair:
    utterance_id: str
    predicted: float
    label: float
    system_id: Optional[str] = None


@dataclass
class MetricsReport:
    utt_mse: float
    utt_lcc: Optional[float]
    utt_srcc: Optional[float]
    n_utterances: int
    sys_mse: Optional[float] = None
    sys_lcc: Optional[float] = None
    sys_srcc: Optional[float] = None
    n_systems: int = 0
    notes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "UTT_MSE": self.utt_mse,
            "UTT_LCC": self.utt_lcc,
            "UTT_SRCC": self.utt_srcc,
            "SYS_MSE": self.sys_mse,
            "SYS_LCC": self.sys_lcc,
            "SYS_SRCC": self.sys_srcc,
            "n_utterances": self.n_utterances,
            "n_systems": self.n_systems,
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_table(self) -> str:
        columns = ("UTT_MSE", "UTT_LCC", "UTT_SRCC", "SYS_MSE", "SYS_LCC", "SYS_SRCC")
        values = self.to_dict()
        cells = ["n/a" if values[c] is None else f"{values[c]:.4f}" for c in columns]
        widths = [max(len(c), len(v)) for c, v in zip(columns, cells)]
        header = "  ".join(c.rjust(w) for c, w in zip(columns, widths))
        row = "  ".join(v.rjust(w) for v, w in zip(cells, widths))
        return header + "\n" + row


def _arrays(pairs: Sequence[EvalPair]):
    x = np.array([p.predicted for p in pairs], dtype=np.float64)
    y = np.array([p.label for p in pairs], dtype=np.float64)
    return x, y


def mse(pairs: Sequence[EvalPair]) -> float:
    if not pairs:
        raise InvalidInputError("mse of an empty pair set")
    x, y = _arrays(pairs)
    return float(np.mean((x - y) ** 2))


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xm = x - x.mean()
    ym = y - y.mean()
    vx = float(np.dot(xm, xm))
    vy = float(np.dot(ym, ym))
    if vx == 0.0 or vy == 0.0:
        raise DegenerateInputError("correlation undefined: one side is constant")
    return float(np.dot(xm, ym) / np.sqrt(vx * vy))


def lcc(pairs: Sequence[EvalPair]) -> float:
    """Pearson linear correlation between predictions and labels."""
    if len(pairs) < 2:
        raise InvalidInputError("lcc needs at least two pairs")
    return _pearson(*_arrays(pairs))


def srcc(pairs: Sequence[EvalPair]) -> float:
    """Spearman rank correlation: Pearson on average-ranked values."""
    if len(pairs) < 2:
        raise InvalidInputError("srcc needs at least two pairs")
    x, y = _arrays(pairs)
    return _pearson(rankdata(x), rankdata(y))


def system_aggregate(pairs: Sequence[EvalPair]) -> list[EvalPair]:
    """Collapse to one pair per system: mean prediction vs mean label."""
    groups: dict = {}
    for p in pairs:
        if p.system_id is None:
            raise InvalidInputError(f"pair {p.utterance_id!r} has no system_id")
        groups.setdefault(p.system_id, []).append(p)
    out = []
    for system_id in sorted(groups):
        members = groups[system_id]
        out.append(
            EvalPair(
                utterance_id=system_id,
                predicted=float(np.mean([m.predicted for m in members])),
                label=float(np.mean([m.label for m in members])),
                system_id=system_id,
            )
        )
    return out


def compute_report(pairs: Sequence[EvalPair]) -> MetricsReport:
    """All available metric levels for a pair set.

    LCC/SRCC slots are ``None`` with an explanatory note when degenerate;
    system-level slots are ``None`` when any pair lacks a system_id.
    """
    if not pairs:
        raise InvalidInputError("cannot evaluate an empty pair set")
    notes = {}
    report = MetricsReport(
        utt_mse=mse(pairs), utt_lcc=None, utt_srcc=None, n_utterances=len(pairs), notes=notes
    )
    for name, fn in (("UTT_LCC", lcc), ("UTT_SRCC", srcc)):
        try:
            setattr(report, name.lower(), fn(pairs))
        except (DegenerateInputError, InvalidInputError) as exc:
            notes[name] = str(exc)
    if all(p.system_id is not None for p in pairs):
        agg = system_aggregate(pairs)
        report.n_systems = len(agg)
        report.sys_mse = mse(agg)
        for name, fn in (("SYS_LCC", lcc), ("SYS_SRCC", srcc)):
            try:
                setattr(report, name.lower(), fn(agg))
            except (DegenerateInputError, InvalidInputError) as exc:
                notes[name] = str(exc)
    else:
        notes["SYS"] = "system-level metrics unavailable: some pairs lack a system_id"
    return report


def predict(params: model.ModelParams, dataset: UtteranceDataset, batch_size: int = 64):
    """Per-utterance posterior predictions, in canonical utterance_id order.

    Returns a list of ``(utterance_id, mu, sigma2)`` tuples.
    """
    order = sorted(range(len(dataset)), key=lambda i: dataset.entries[i].utterance_id)
    need_spec = params.arch.variant == "dual_branch"
    out = []
    for start in range(0, len(order), batch_size):
        chunk = order[start : start + batch_size]
        ssl, spec, _ = assemble_batch(dataset, chunk, need_spec, dtype=params.dtype)
        mu, sigma2 = model.forward_batch(params, ssl, spec)
        for j, i in enumerate(chunk):
            out.append((dataset.entries[i].utterance_id, float(mu[j]), float(sigma2[j])))
    return out


def evaluate(params: model.ModelParams, dataset: UtteranceDataset, batch_size: int = 64) -> MetricsReport:
    """Run inference over a dataset and score the mean predictions."""
    by_id = {e.utterance_id: e for e in dataset.entries}
    pairs = [
        EvalPair(
            utterance_id=utt,
            predicted=mu,
            label=by_id[utt].mos_label,
            system_id=by_id[utt].system_id,
        )
        for utt, mu, _sigma2 in predict(params, dataset, batch_size)
    ]
    return compute_report(pairs)
