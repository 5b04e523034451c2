"""Array-level layer primitives with explicit reverse-mode passes.

Conventions: batched channels-last layouts ([B, L, C] for 1-D, [B, H, W, C]
for 2-D), valid (no-padding) convolutions, weights stored as
[k, C_in, C_out] / [kh, kw, C_in, C_out] and dense weights as [in, out].
Every ``*_forward`` returns ``(y, cache)``; the matching ``*_backward``
consumes ``cache`` and the upstream gradient.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .errors import ShapeError

VAR_FLOOR = 1e-3
VAR_CEIL = 1e3


def _out_len(n: int, k: int, s: int) -> int:
    if n < k:
        raise ShapeError(f"spatial extent {n} smaller than kernel {k}")
    return (n - k) // s + 1


def conv1d_forward(x, w, b, stride):
    """x [B,L,Cin], w [K,Cin,Cout] -> y [B,Lo,Cout]."""
    B, L, cin = x.shape
    k, cin_w, cout = w.shape
    if cin != cin_w:
        raise ShapeError(f"conv1d channel mismatch: input {cin}, weight {cin_w}")
    lo = _out_len(L, k, stride)
    cols = np.empty((B, lo, k * cin), dtype=x.dtype)
    for dk in range(k):
        cols[:, :, dk * cin : (dk + 1) * cin] = x[:, dk : dk + stride * lo : stride, :]
    y = cols.reshape(-1, k * cin) @ w.reshape(k * cin, cout)
    y = y.reshape(B, lo, cout) + b
    return y, (x.shape, cols, w, stride)


def conv1d_backward(dy, cache):
    x_shape, cols, w, stride = cache
    B, L, cin = x_shape
    k, _, cout = w.shape
    lo = dy.shape[1]
    dy_flat = dy.reshape(-1, cout)
    dw = (cols.reshape(-1, k * cin).T @ dy_flat).reshape(w.shape)
    db = dy_flat.sum(axis=0)
    dcols = (dy_flat @ w.reshape(k * cin, cout).T).reshape(B, lo, k * cin)
    dx = np.zeros(x_shape, dtype=dy.dtype)
    for dk in range(k):
        dx[:, dk : dk + stride * lo : stride, :] += dcols[:, :, dk * cin : (dk + 1) * cin]
    return dx, dw, db


def conv2d_forward(x, w, b, stride):
    """x [B,H,W,Cin], w [kh,kw,Cin,Cout] -> y [B,Ho,Wo,Cout]."""
    B, H, W, cin = x.shape
    kh, kw, cin_w, cout = w.shape
    if cin != cin_w:
        raise ShapeError(f"conv2d channel mismatch: input {cin}, weight {cin_w}")
    ho = _out_len(H, kh, stride)
    wo = _out_len(W, kw, stride)
    cols = np.empty((B, ho, wo, kh * kw * cin), dtype=x.dtype)
    i = 0
    for dh in range(kh):
        for dw_ in range(kw):
            cols[..., i * cin : (i + 1) * cin] = x[
                :, dh : dh + stride * ho : stride, dw_ : dw_ + stride * wo : stride, :
            ]
            i += 1
    y = cols.reshape(-1, kh * kw * cin) @ w.reshape(kh * kw * cin, cout)
    y = y.reshape(B, ho, wo, cout) + b
    return y, (x.shape, cols, w, stride)


def conv2d_backward(dy, cache):
    x_shape, cols, w, stride = cache
    B = x_shape[0]
    cin = x_shape[3]
    kh, kw, _, cout = w.shape
    ho, wo = dy.shape[1], dy.shape[2]
    dy_flat = dy.reshape(-1, cout)
    dw = (cols.reshape(-1, kh * kw * cin).T @ dy_flat).reshape(w.shape)
    db = dy_flat.sum(axis=0)
    dcols = (dy_flat @ w.reshape(kh * kw * cin, cout).T).reshape(B, ho, wo, kh * kw * cin)
    dx = np.zeros(x_shape, dtype=dy.dtype)
    i = 0
    for dh in range(kh):
        for dw_ in range(kw):
            dx[:, dh : dh + stride * ho : stride, dw_ : dw_ + stride * wo : stride, :] += dcols[
                ..., i * cin : (i + 1) * cin
            ]
            i += 1
    return dx, dw, db


def maxpool2d_forward(x):
    """2x2 max pooling, stride 2, trailing odd row/column dropped."""
    B, H, W, C = x.shape
    ho, wo = H // 2, W // 2
    if ho < 1 or wo < 1:
        raise ShapeError(f"input {H}x{W} too small for 2x2 pooling")
    corners = (
        x[:, 0 : ho * 2 : 2, 0 : wo * 2 : 2, :],
        x[:, 0 : ho * 2 : 2, 1 : wo * 2 : 2, :],
        x[:, 1 : ho * 2 : 2, 0 : wo * 2 : 2, :],
        x[:, 1 : ho * 2 : 2, 1 : wo * 2 : 2, :],
    )
    y = np.maximum(np.maximum(corners[0], corners[1]), np.maximum(corners[2], corners[3]))
    return y, (x, y)


def maxpool2d_backward(dy, cache):
    # Gradient goes to the first window element (row-major) attaining the max.
    x, y = cache
    B, H, W, C = x.shape
    ho, wo = y.shape[1], y.shape[2]
    dx = np.zeros_like(x)
    taken = np.zeros(y.shape, dtype=bool)
    for dh in (0, 1):
        for dw in (0, 1):
            corner = x[:, dh : dh + 2 * ho : 2, dw : dw + 2 * wo : 2, :]
            hit = (corner == y) & ~taken
            dx[:, dh : dh + 2 * ho : 2, dw : dw + 2 * wo : 2, :] += dy * hit
            taken |= hit
    return dx


def global_avg_pool_forward(x, axes):
    y = x.mean(axis=axes)
    count = 1
    for a in axes:
        count *= x.shape[a]
    return y, (x.shape, axes, count)


def global_avg_pool_backward(dy, cache):
    x_shape, axes, count = cache
    expanded = np.expand_dims(dy, axes)
    return np.broadcast_to(expanded / count, x_shape).astype(dy.dtype, copy=False)


def dense_forward(x, w, b):
    """x [B,in], w [in,out] -> y [B,out]."""
    if x.shape[1] != w.shape[0]:
        raise ShapeError(f"dense input width {x.shape[1]} != weight rows {w.shape[0]}")
    return x @ w + b, (x, w)


def dense_backward(dy, cache):
    x, w = cache
    return dy @ w.T, x.T @ dy, dy.sum(axis=0)


def relu_forward(x):
    return np.maximum(x, 0), x > 0


def relu_backward(dy, mask):
    return dy * mask


def softplus_clamped_forward(s):
    """Positivity transform log(1 + e^s), clamped to [VAR_FLOOR, VAR_CEIL]."""
    sp = np.logaddexp(0.0, s)
    y = np.clip(sp, VAR_FLOOR, VAR_CEIL)
    active = (sp > VAR_FLOOR) & (sp < VAR_CEIL)
    return y, (s, active)


def softplus_clamped_backward(dy, cache):
    s, active = cache
    return dy * expit(s) * active


def gnll_forward(mu, sigma2, y):
    """Mean over the batch of 0.5*(log s2 + (y-mu)^2 / s2)."""
    resid = y - mu
    per_sample = 0.5 * (np.log(sigma2) + resid**2 / sigma2)
    return float(per_sample.mean()), per_sample


def gnll_backward(mu, sigma2, y):
    n = mu.shape[0]
    dmu = (mu - y) / sigma2 / n
    dsigma2 = 0.5 * (1.0 / sigma2 - (y - mu) ** 2 / sigma2**2) / n
    return dmu, dsigma2
