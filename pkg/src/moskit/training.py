"""Optimizer, schedule, training loop, and the two-step transfer recipe.

Training is fully deterministic: the same config, data and seed reproduce
every parameter bit.  Mini-batches are drawn by a seeded per-epoch
permutation with the final partial batch kept; the learning rate decays by
``scheduler_gamma`` per optimizer step; validation loss is computed each
epoch and drives checkpoint selection.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import model
from .datasets import UtteranceDataset, assemble_batch
from .errors import ConfigError, InvalidInputError, NumericError
from .utils import config_hash, derive_seed

ADAM_EPS = 1e-8

SELECTIONS = ("best_val_loss", "last_epoch")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    seed: int
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.0
    scheduler_gamma: float = 0.9999
    batch_size: int = 64
    selection: str = "best_val_loss"

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if not (0.0 < self.scheduler_gamma <= 1.0):
            raise ConfigError("scheduler_gamma must lie in (0, 1]")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("betas must lie in [0, 1)")
        if self.selection not in SELECTIONS:
            raise ConfigError(f"unknown selection rule {self.selection!r}")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "seed": self.seed,
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "weight_decay": self.weight_decay,
            "scheduler_gamma": self.scheduler_gamma,
            "batch_size": self.batch_size,
            "selection": self.selection,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown training keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0


def init_adam_state(params: model.ModelParams) -> AdamState:
    zeros = lambda: {k: np.zeros_like(v) for k, v in params.tensors.items()}
    return AdamState(m=zeros(), v=zeros(), t=0)


def adam_step(
    params: model.ModelParams,
    grads: dict,
    state: AdamState,
    lr_t: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    weight_decay: float = 0.0,
):
    """One bias-corrected Adam update.  Mutates ``params`` and ``state`` in place."""
    if lr_t <= 0:
        raise InvalidInputError("lr_t must be positive")
    if set(grads) != set(params.tensors):
        raise ConfigError("gradient keys do not match parameter keys")
    state.t += 1
    t = state.t
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for k, p in params.tensors.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ConfigError(f"gradient shape mismatch for {k!r} ({g.shape} vs {p.shape})")
        if weight_decay:
            g = g + weight_decay * p
        m = state.m[k]
        v = state.v[k]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr_t * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)
    return params, state


def lr_at_step(cfg: TrainConfig, step: int) -> float:
    """Scheduled learning rate: ``lr * gamma**step`` (decay per optimizer step)."""
    if step < 0:
        raise InvalidInputError("step must be >= 0")
    return cfg.lr * cfg.scheduler_gamma**step


@dataclass
class RunRecord:
    """Everything needed to audit one training run."""

    seed: int
    config_hash: str
    train_losses: list = field(default_factory=list)
    val_losses: list = field(default_factory=list)
    chosen_checkpoint: str = "init"
    optimizer_steps: int = 0

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "config_hash": self.config_hash,
            "train_losses": self.train_losses,
            "val_losses": self.val_losses,
            "chosen_checkpoint": self.chosen_checkpoint,
            "optimizer_steps": self.optimizer_steps,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def dataset_loss(params: model.ModelParams, dataset: UtteranceDataset, batch_size: int = 64) -> float:
    """Mean GNLL over a dataset (sample-weighted across batches)."""
    need_spec = params.arch.variant == "dual_branch"
    total = 0.0
    n = len(dataset)
    for start in range(0, n, batch_size):
        idx = list(range(start, min(start + batch_size, n)))
        ssl, spec, labels = assemble_batch(dataset, idx, need_spec, dtype=params.dtype)
        mu, sigma2 = model.forward_batch(params, ssl, spec)
        per = 0.5 * (np.log(sigma2) + (labels - mu) ** 2 / sigma2)
        total += float(per.sum())
    return total / n


def train(
    params: model.ModelParams,
    train_set: UtteranceDataset,
    val_set: UtteranceDataset,
    cfg: TrainConfig,
):
    """Train a copy of ``params``; returns ``(selected_params, record)``.

    The input parameter set is not mutated.  With ``epochs == 0`` the
    initial parameters come back unchanged.
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise InvalidInputError("train and validation sets must be non-empty")
    current = params.copy()
    state = init_adam_state(current)
    shuffle_rng = np.random.default_rng(derive_seed(cfg.seed, "shuffle"))
    need_spec = current.arch.variant == "dual_branch"
    record = RunRecord(seed=cfg.seed, config_hash=config_hash(cfg.to_dict()))

    best_val = math.inf
    best_params = current.copy()
    step = 0
    for epoch in range(cfg.epochs):
        perm = shuffle_rng.permutation(len(train_set))
        epoch_losses = []
        for start in range(0, len(perm), cfg.batch_size):
            idx = perm[start : start + cfg.batch_size].tolist()
            ssl, spec, labels = assemble_batch(train_set, idx, need_spec, dtype=current.dtype)
            grads, loss = model.backward(current, ssl, spec, labels)
            if not math.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch} step {step}")
            adam_step(
                current,
                grads,
                state,
                lr_at_step(cfg, step),
                cfg.beta1,
                cfg.beta2,
                cfg.weight_decay,
            )
            epoch_losses.append(loss)
            step += 1
        val_loss = dataset_loss(current, val_set, cfg.batch_size)
        if not math.isfinite(val_loss):
            raise NumericError(f"non-finite validation loss after epoch {epoch}")
        record.train_losses.append(float(np.mean(epoch_losses)))
        record.val_losses.append(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best_params = current.copy()
            record.chosen_checkpoint = f"epoch{epoch:03d}"
    record.optimizer_steps = step

    if cfg.epochs == 0:
        record.chosen_checkpoint = "init"
        return current, record
    if cfg.selection == "last_epoch":
        record.chosen_checkpoint = f"epoch{cfg.epochs - 1:03d}"
        return current, record
    return best_params, record


@dataclass
class TwoStepResult:
    params: model.ModelParams
    pretrain_params: model.ModelParams
    pretrain_record: RunRecord
    finetune_record: RunRecord

    @property
    def records(self):
        return self.pretrain_record, self.finetune_record


def two_step_train(
    arch: model.ArchitectureConfig,
    pretrain_set: UtteranceDataset,
    pretrain_val: UtteranceDataset,
    finetune_set: UtteranceDataset,
    finetune_val: UtteranceDataset,
    pre_cfg: TrainConfig,
    fine_cfg: TrainConfig,
    dtype=np.float64,
) -> TwoStepResult:
    """Pretrain on the large corpus, then briefly fine-tune on the small one.

    The fine-tuning stage restarts the optimizer state and the learning-rate
    schedule from scratch; ``result.params`` is the stage-2 selection.
    """
    init = model.init_params(arch, derive_seed(pre_cfg.seed, "init"), dtype=dtype)
    stage1, rec1 = train(init, pretrain_set, pretrain_val, pre_cfg)
    stage2, rec2 = train(stage1, finetune_set, finetune_val, fine_cfg)
    return TwoStepResult(
        params=stage2, pretrain_params=stage1, pretrain_record=rec1, finetune_record=rec2
    )


def multi_run(
    run_fn: Callable[[int], Mapping[str, float]],
    n_runs: int,
    base_seed: int,
) -> dict:
    """Repeat an experiment over derived seeds and aggregate each metric.

    ``run_fn(seed)`` must return a metric mapping with a fixed key set.
    Returns ``{metric: {"mean": m, "std": s}}`` with the sample standard
    deviation (0.0 for a single run).
    """
    if n_runs < 1:
        raise InvalidInputError("n_runs must be >= 1")
    results = []
    for i in range(n_runs):
        results.append(dict(run_fn(derive_seed(base_seed, "run", i))))
    keys = set(results[0])
    for r in results[1:]:
        if set(r) != keys:
            raise InvalidInputError("runs returned inconsistent metric keys")
    aggregated = {}
    for k in sorted(keys):
        values = np.array([r[k] for r in results], dtype=np.float64)
        std = float(values.std(ddof=1)) if n_runs > 1 else 0.0
        aggregated[k] = {"mean": float(values.mean()), "std": std}
    return aggregated
