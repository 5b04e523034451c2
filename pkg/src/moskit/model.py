"""Dual-branch MOS predictor: conv stacks per branch, Gaussian-posterior head.

The network has two inputs: an SSL feature matrix (processed by a 1-D conv
stack, the feature branch) and a 48 kHz log-spectrogram (2-D conv blocks
with max pooling, the spectrogram branch).  Branch embeddings are globally
pooled, concatenated, and fed through a fully connected mapping module
ending in two independent linear heads: one emits the predicted mean, the
other a pre-activation that a clamped softplus turns into a strictly
positive variance.  An ``ssl_only`` variant drops the spectrogram branch
and feeds the feature embedding straight into the mapping module.

Forward evaluation is deterministic; :func:`backward` returns exact
reverse-mode gradients of the Gaussian negative log-likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterator

import numpy as np

from . import layers
from .errors import ConfigError, InvalidInputError, NumericError, ShapeError

FPM_KERNEL = 3
FPM_STRIDE = 2

VARIANTS = ("dual_branch", "ssl_only")


@dataclass(frozen=True)
class ArchitectureConfig:
    """Shapes of every trainable block.

    ``fused_dim`` is derived: twice the branch embedding width for the
    dual-branch variant, the branch width alone for ``ssl_only``.
    """

    ssl_dim: int = 1920
    fpm_channels: tuple = (512, 512, 320)
    spm_blocks: tuple = ((32, 3, 1), (64, 3, 1), (128, 3, 1), (320, 3, 1))
    branch_embed_dim: int = 320
    head_hidden: tuple = (256, 128, 64)
    variant: str = "dual_branch"

    def __post_init__(self):
        object.__setattr__(self, "fpm_channels", tuple(int(c) for c in self.fpm_channels))
        object.__setattr__(
            self, "spm_blocks", tuple(tuple(int(v) for v in blk) for blk in self.spm_blocks)
        )
        object.__setattr__(self, "head_hidden", tuple(int(h) for h in self.head_hidden))
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.ssl_dim < 1:
            raise ConfigError("ssl_dim must be positive")
        if not self.fpm_channels:
            raise ConfigError("fpm_channels must not be empty")
        if any(c < 1 for c in self.fpm_channels):
            raise ConfigError("fpm_channels must be positive")
        if self.fpm_channels[-1] != self.branch_embed_dim:
            raise ConfigError(
                f"last feature-branch width {self.fpm_channels[-1]} must equal "
                f"branch_embed_dim {self.branch_embed_dim}"
            )
        if not self.head_hidden:
            raise ConfigError("head_hidden must not be empty")
        if any(h < 1 for h in self.head_hidden):
            raise ConfigError("head widths must be positive")
        if self.variant == "dual_branch":
            if not self.spm_blocks:
                raise ConfigError("dual_branch requires at least one spectrogram block")
            for blk in self.spm_blocks:
                if len(blk) != 3 or any(v < 1 for v in blk):
                    raise ConfigError(f"bad spectrogram block spec {blk}")
            if self.spm_blocks[-1][0] != self.branch_embed_dim:
                raise ConfigError(
                    f"last spectrogram-branch width {self.spm_blocks[-1][0]} must equal "
                    f"branch_embed_dim {self.branch_embed_dim}"
                )

    @property
    def fused_dim(self) -> int:
        if self.variant == "dual_branch":
            return 2 * self.branch_embed_dim
        return self.branch_embed_dim

    def to_dict(self) -> dict:
        return {
            "ssl_dim": self.ssl_dim,
            "fpm_channels": list(self.fpm_channels),
            "spm_blocks": [list(b) for b in self.spm_blocks],
            "branch_embed_dim": self.branch_embed_dim,
            "head_hidden": list(self.head_hidden),
            "variant": self.variant,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArchitectureConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown architecture keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class MosPrediction:
    """Predicted Gaussian posterior for one utterance; ``mu`` is the MOS point estimate."""

    mu: float
    sigma2: float


@dataclass
class ModelParams:
    """All trainable tensors, keyed by layer name, plus the architecture."""

    arch: ArchitectureConfig
    tensors: dict
    init_seed: int = 0

    @property
    def dtype(self) -> np.dtype:
        return next(iter(self.tensors.values())).dtype

    def copy(self) -> "ModelParams":
        return ModelParams(
            arch=self.arch,
            tensors={k: v.copy() for k, v in self.tensors.items()},
            init_seed=self.init_seed,
        )


def layer_shapes(arch: ArchitectureConfig) -> Iterator[tuple]:
    """Canonical enumeration of (name, shape, fan_in) for every tensor."""
    cin = arch.ssl_dim
    for i, cout in enumerate(arch.fpm_channels):
        yield f"fpm.conv{i}.w", (FPM_KERNEL, cin, cout), FPM_KERNEL * cin
        yield f"fpm.conv{i}.b", (cout,), 0
        cin = cout
    if arch.variant == "dual_branch":
        cin = 1
        for i, (cout, k, _s) in enumerate(arch.spm_blocks):
            yield f"spm.block{i}.w", (k, k, cin, cout), k * k * cin
            yield f"spm.block{i}.b", (cout,), 0
            cin = cout
    width = arch.fused_dim
    for i, h in enumerate(arch.head_hidden):
        yield f"head.fc{i}.w", (width, h), width
        yield f"head.fc{i}.b", (h,), 0
        width = h
    for head in ("mu", "var"):
        yield f"head.{head}.w", (width, 1), width
        yield f"head.{head}.b", (1,), 0


def init_params(arch: ArchitectureConfig, seed: int, dtype=np.float64) -> ModelParams:
    """Deterministic initialization: fan-in-scaled uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape, fan_in in layer_shapes(arch):
        if name.endswith(".b"):
            tensors[name] = np.zeros(shape, dtype=dtype)
        else:
            limit = 1.0 / np.sqrt(fan_in)
            tensors[name] = rng.uniform(-limit, limit, size=shape).astype(dtype)
    return ModelParams(arch=arch, tensors=tensors, init_seed=seed)


def _check_ssl_input(arch: ArchitectureConfig, ssl: np.ndarray) -> None:
    if ssl.ndim != 3:
        raise ShapeError(f"ssl batch must be [B, n_frames, dim], got {ssl.shape}")
    if ssl.shape[2] != arch.ssl_dim:
        raise ShapeError(f"ssl feature dim {ssl.shape[2]} != architecture ssl_dim {arch.ssl_dim}")


def _fpm(params: ModelParams, ssl: np.ndarray, keep_cache: bool):
    t = params.tensors
    caches = []
    h = ssl
    for i in range(len(params.arch.fpm_channels)):
        h, c_conv = layers.conv1d_forward(h, t[f"fpm.conv{i}.w"], t[f"fpm.conv{i}.b"], FPM_STRIDE)
        h, c_relu = layers.relu_forward(h)
        if keep_cache:
            caches.append((c_conv, c_relu))
    emb, c_pool = layers.global_avg_pool_forward(h, (1,))
    return emb, (caches, c_pool) if keep_cache else None


def _fpm_backward(params: ModelParams, demb, cache, grads):
    caches, c_pool = cache
    dh = layers.global_avg_pool_backward(demb, c_pool)
    for i in reversed(range(len(params.arch.fpm_channels))):
        c_conv, c_relu = caches[i]
        dh = layers.relu_backward(dh, c_relu)
        dh, dw, db = layers.conv1d_backward(dh, c_conv)
        grads[f"fpm.conv{i}.w"] = dw
        grads[f"fpm.conv{i}.b"] = db
    return dh


def _spm(params: ModelParams, spec: np.ndarray, keep_cache: bool):
    t = params.tensors
    caches = []
    h = spec[:, :, :, None]
    for i, (_c, _k, stride) in enumerate(params.arch.spm_blocks):
        h, c_conv = layers.conv2d_forward(h, t[f"spm.block{i}.w"], t[f"spm.block{i}.b"], stride)
        h, c_relu = layers.relu_forward(h)
        h, c_pool = layers.maxpool2d_forward(h)
        if keep_cache:
            caches.append((c_conv, c_relu, c_pool))
    emb, c_gap = layers.global_avg_pool_forward(h, (1, 2))
    return emb, (caches, c_gap) if keep_cache else None


def _spm_backward(params: ModelParams, demb, cache, grads):
    caches, c_gap = cache
    dh = layers.global_avg_pool_backward(demb, c_gap)
    for i in reversed(range(len(params.arch.spm_blocks))):
        c_conv, c_relu, c_pool = caches[i]
        dh = layers.maxpool2d_backward(dh, c_pool)
        dh = layers.relu_backward(dh, c_relu)
        dh, dw, db = layers.conv2d_backward(dh, c_conv)
        grads[f"spm.block{i}.w"] = dw
        grads[f"spm.block{i}.b"] = db
    return dh


def _head(params: ModelParams, fused: np.ndarray, keep_cache: bool):
    t = params.tensors
    caches = []
    h = fused
    for i in range(len(params.arch.head_hidden)):
        h, c_fc = layers.dense_forward(h, t[f"head.fc{i}.w"], t[f"head.fc{i}.b"])
        h, c_relu = layers.relu_forward(h)
        if keep_cache:
            caches.append((c_fc, c_relu))
    mu, c_mu = layers.dense_forward(h, t["head.mu.w"], t["head.mu.b"])
    s_raw, c_var = layers.dense_forward(h, t["head.var.w"], t["head.var.b"])
    sigma2, c_sp = layers.softplus_clamped_forward(s_raw[:, 0])
    cache = (caches, c_mu, c_var, c_sp) if keep_cache else None
    return mu[:, 0], sigma2, cache


def _head_backward(params: ModelParams, dmu, dsigma2, cache, grads):
    caches, c_mu, c_var, c_sp = cache
    ds_raw = layers.softplus_clamped_backward(dsigma2, c_sp)[:, None]
    dh_var, dw, db = layers.dense_backward(ds_raw, c_var)
    grads["head.var.w"] = dw
    grads["head.var.b"] = db
    dh_mu, dw, db = layers.dense_backward(dmu[:, None], c_mu)
    grads["head.mu.w"] = dw
    grads["head.mu.b"] = db
    dh = dh_var + dh_mu
    for i in reversed(range(len(params.arch.head_hidden))):
        c_fc, c_relu = caches[i]
        dh = layers.relu_backward(dh, c_relu)
        dh, dw, db = layers.dense_backward(dh, c_fc)
        grads[f"head.fc{i}.w"] = dw
        grads[f"head.fc{i}.b"] = db
    return dh


def _forward_full(params: ModelParams, ssl: np.ndarray, spec, keep_cache: bool):
    arch = params.arch
    dtype = params.dtype
    ssl = np.asarray(ssl, dtype=dtype)
    _check_ssl_input(arch, ssl)
    fpm_emb, fpm_cache = _fpm(params, ssl, keep_cache)
    if arch.variant == "dual_branch":
        if spec is None:
            raise InvalidInputError("dual_branch forward requires a spectrogram input")
        spec = np.asarray(spec, dtype=dtype)
        if spec.ndim != 3:
            raise ShapeError(f"spectrogram batch must be [B, n_bins, n_frames], got {spec.shape}")
        if spec.shape[0] != ssl.shape[0]:
            raise ShapeError("ssl and spectrogram batch sizes differ")
        spm_emb, spm_cache = _spm(params, spec, keep_cache)
        fused = np.concatenate([fpm_emb, spm_emb], axis=1)
    else:
        spm_cache = None
        fused = fpm_emb
    mu, sigma2, head_cache = _head(params, fused, keep_cache)
    cache = (fpm_cache, spm_cache, head_cache) if keep_cache else None
    return mu, sigma2, cache


def forward_batch(params: ModelParams, ssl: np.ndarray, spec=None):
    """Batched inference: returns (mu [B], sigma2 [B])."""
    mu, sigma2, _ = _forward_full(params, ssl, spec, keep_cache=False)
    return mu, sigma2


def forward(params: ModelParams, ssl: np.ndarray, spec=None) -> MosPrediction:
    """Single-utterance inference from [n_frames, dim] features."""
    ssl = np.asarray(ssl)
    if ssl.ndim != 2:
        raise ShapeError(f"single-utterance ssl input must be 2-D, got {ssl.ndim}-D")
    spec_b = None
    if spec is not None:
        spec = np.asarray(spec)
        if spec.ndim != 2:
            raise ShapeError(f"single-utterance spectrogram must be 2-D, got {spec.ndim}-D")
        spec_b = spec[None]
    mu, sigma2 = forward_batch(params, ssl[None], spec_b)
    return MosPrediction(mu=float(mu[0]), sigma2=float(sigma2[0]))


def forward_fpm(params: ModelParams, ssl: np.ndarray) -> np.ndarray:
    """Feature-branch embedding for one utterance."""
    ssl = np.asarray(ssl, dtype=params.dtype)
    if ssl.ndim != 2:
        raise ShapeError("expected a [n_frames, dim] matrix")
    _check_ssl_input(params.arch, ssl[None])
    emb, _ = _fpm(params, ssl[None], keep_cache=False)
    return emb[0]


def forward_spm(params: ModelParams, spec: np.ndarray) -> np.ndarray:
    """Spectrogram-branch embedding for one utterance."""
    if params.arch.variant != "dual_branch":
        raise InvalidInputError("ssl_only model has no spectrogram branch")
    spec = np.asarray(spec, dtype=params.dtype)
    if spec.ndim != 2:
        raise ShapeError("expected a [n_bins, n_frames] matrix")
    emb, _ = _spm(params, spec[None], keep_cache=False)
    return emb[0]


def backward(params: ModelParams, ssl: np.ndarray, spec, labels: np.ndarray):
    """Loss and exact gradients of the Gaussian NLL over a batch.

    Returns ``(grads, loss)`` where ``grads`` mirrors ``params.tensors``.
    Raises :class:`NumericError` if the loss goes non-finite, naming the
    first offending layer.
    """
    labels = np.asarray(labels, dtype=params.dtype)
    if labels.ndim != 1 or labels.shape[0] == 0:
        raise InvalidInputError("labels must be a non-empty 1-D array")
    if not np.isfinite(labels).all():
        raise InvalidInputError("labels must be finite")
    mu, sigma2, cache = _forward_full(params, ssl, spec, keep_cache=True)
    if labels.shape[0] != mu.shape[0]:
        raise ShapeError("label count differs from batch size")
    loss, _ = layers.gnll_forward(mu, sigma2, labels)
    if not np.isfinite(loss):
        _diagnose_nonfinite(params, ssl, spec)
        raise NumericError("non-finite loss with finite activations (degenerate variance?)")

    grads = {}
    dmu, dsigma2 = layers.gnll_backward(mu, sigma2, labels)
    fpm_cache, spm_cache, head_cache = cache
    dfused = _head_backward(params, dmu, dsigma2, head_cache, grads)
    if params.arch.variant == "dual_branch":
        d = params.arch.branch_embed_dim
        _fpm_backward(params, dfused[:, :d], fpm_cache, grads)
        _spm_backward(params, dfused[:, d:], spm_cache, grads)
    else:
        _fpm_backward(params, dfused, fpm_cache, grads)
    return grads, loss


def _diagnose_nonfinite(params: ModelParams, ssl, spec) -> None:
    # Re-run the forward pass checking each stage, to name the culprit.
    dtype = params.dtype
    ssl = np.asarray(ssl, dtype=dtype)
    if not np.isfinite(ssl).all():
        raise NumericError("non-finite values in the SSL feature input")
    if spec is not None and not np.isfinite(np.asarray(spec, dtype=dtype)).all():
        raise NumericError("non-finite values in the spectrogram input")
    t = params.tensors
    for name, v in t.items():
        if not np.isfinite(v).all():
            raise NumericError(f"non-finite parameter tensor {name!r}")
    h = ssl
    for i in range(len(params.arch.fpm_channels)):
        h, _ = layers.conv1d_forward(h, t[f"fpm.conv{i}.w"], t[f"fpm.conv{i}.b"], FPM_STRIDE)
        if not np.isfinite(h).all():
            raise NumericError(f"non-finite activations after layer fpm.conv{i}")
        h, _ = layers.relu_forward(h)
    if params.arch.variant == "dual_branch":
        h2 = np.asarray(spec, dtype=dtype)[:, :, :, None]
        for i, (_c, _k, stride) in enumerate(params.arch.spm_blocks):
            h2, _ = layers.conv2d_forward(h2, t[f"spm.block{i}.w"], t[f"spm.block{i}.b"], stride)
            if not np.isfinite(h2).all():
                raise NumericError(f"non-finite activations after layer spm.block{i}")
            h2, _ = layers.relu_forward(h2)
            h2, _ = layers.maxpool2d_forward(h2)


def ssl_only_view(params: ModelParams) -> ModelParams:
    """Project dual-branch parameters onto the ssl_only architecture.

    Keeps the feature branch and head tensors, slicing the first mapping
    layer down to the feature half of the fused vector.  Useful for
    ablations; predictions match the dual-branch model exactly whenever the
    spectrogram half of that first mapping layer is zero.
    """
    arch = params.arch
    if arch.variant != "dual_branch":
        raise InvalidInputError("already an ssl_only parameter set")
    new_arch = replace(arch, variant="ssl_only", spm_blocks=())
    d = arch.branch_embed_dim
    tensors = {}
    for k, v in params.tensors.items():
        if k.startswith("spm."):
            continue
        if k == "head.fc0.w":
            tensors[k] = v[:d].copy()
        else:
            tensors[k] = v.copy()
    return ModelParams(arch=new_arch, tensors=tensors, init_seed=params.init_seed)
