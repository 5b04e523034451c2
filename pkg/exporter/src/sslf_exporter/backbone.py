"""Backbone loading and hidden-state extraction.

A backbone spec selects where weights come from:

    hf:<repo_id>[@revision]      pretrained weights via transformers
    stub:dim=D,layers=N,seed=S   randomly initialized wav2vec2 of the same
                                 family, for tests and dry runs

Hidden-state convention: ``layer_index`` counts transformer blocks from 1
after the feature projection, so layer 9 is ``hidden_states[9]`` — the
residual-stream output of the ninth block.  The convention is recorded in
the model id written into every output file, so consumers can detect
drift.
"""

from __future__ import annotations

import numpy as np

from .errors import BackboneError

DEFAULT_LAYER = 9


def _parse_kv(text: str) -> dict:
    out = {}
    for part in text.split(","):
        if not part:
            continue
        if "=" not in part:
            raise BackboneError(f"bad stub parameter {part!r}, want key=value")
        k, v = part.split("=", 1)
        out[k.strip()] = v.strip()
    return out


class Wav2Vec2Backbone:
    """Frozen wav2vec2-family feature extractor."""

    def __init__(self, model, model_id: str):
        self.model = model.eval()
        self.model_id = model_id
        self.num_layers = model.config.num_hidden_layers
        self.dim = model.config.hidden_size

    @classmethod
    def load(cls, spec: str, device: str = "cpu") -> "Wav2Vec2Backbone":
        try:
            import torch
            from transformers import Wav2Vec2Config, Wav2Vec2Model
        except ImportError as exc:  # pragma: no cover - environment issue
            raise BackboneError(f"torch/transformers unavailable: {exc}") from exc

        if spec.startswith("hf:"):
            ref = spec[3:]
            repo, _, revision = ref.partition("@")
            try:
                model = Wav2Vec2Model.from_pretrained(repo, revision=revision or None)
            except Exception as exc:
                raise BackboneError(f"cannot load pretrained backbone {ref!r}: {exc}") from exc
            model_id = f"{repo}@{revision or 'main'} hidden_states[layer] post-block"
        elif spec.startswith("stub:"):
            params = _parse_kv(spec[5:])
            dim = int(params.get("dim", 64))
            layers = int(params.get("layers", 10))
            seed = int(params.get("seed", 0))
            heads = max(1, dim // 64)
            while dim % heads:
                heads -= 1
            config = Wav2Vec2Config(
                hidden_size=dim,
                num_hidden_layers=layers,
                num_attention_heads=heads,
                intermediate_size=2 * dim,
            )
            torch.manual_seed(seed)
            model = Wav2Vec2Model(config)
            model_id = f"stub-wav2vec2 dim={dim} layers={layers} seed={seed} hidden_states[layer] post-block"
        else:
            raise BackboneError(f"unknown backbone spec {spec!r}; use hf:... or stub:...")

        try:
            model = model.to(device)
        except Exception as exc:
            raise BackboneError(f"cannot move backbone to device {device!r}: {exc}") from exc
        return cls(model, model_id)

    def extract(self, batch: np.ndarray, layer_index: int = DEFAULT_LAYER) -> np.ndarray:
        """Hidden states for a [B, n_samples] float32 waveform batch.

        Returns [B, n_frames, dim] float32 from the requested transformer
        block (1-based after the feature projection).
        """
        import torch

        if not (1 <= layer_index <= self.num_layers):
            raise BackboneError(
                f"layer_index {layer_index} outside 1..{self.num_layers} for this backbone"
            )
        with torch.inference_mode():
            waves = torch.from_numpy(np.ascontiguousarray(batch, dtype=np.float32))
            waves = waves.to(next(self.model.parameters()).device)
            out = self.model(waves, output_hidden_states=True)
        return out.hidden_states[layer_index].cpu().numpy().astype(np.float32)
