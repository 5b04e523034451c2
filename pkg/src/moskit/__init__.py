"""Non-intrusive speech quality (MOS) prediction toolkit.

A dual-branch regressor combines self-supervised speech features
(precomputed, file-borne) with a 48 kHz log-spectrogram branch, predicts a
Gaussian posterior over the MOS label, and trains with a two-step
pretrain/fine-tune recipe.  Everything runs on numpy/scipy with exact
reverse-mode gradients and deterministic seeding.
"""

from . import checkpoint, datasets, dsp, evaluation, layers, model, sslfeat, training, utils
from .errors import MoskitError

__all__ = [
    "checkpoint",
    "datasets",
    "dsp",
    "evaluation",
    "layers",
    "model",
    "sslfeat",
    "training",
    "utils",
    "MoskitError",
]

__version__ = "0.1.0"
