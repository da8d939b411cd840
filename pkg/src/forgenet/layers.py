"""Forward and backward passes for every block in the detector network.

Conv is valid-padding, stride-1, 3x3, cross-correlation convention (no
kernel flip). Batch normalization keeps per-channel moving statistics for
inference. The hidden activation is ReLU; the output head is a width-1
dense layer squashed by a clamped sigmoid feeding binary cross-entropy.

All functions are dtype-preserving so the same code runs the float32
model path and the float64 finite-difference path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DegenerateBatchError, ShapeError
from .tensor import require_rank

KERNEL = 3

# Probabilities are clamped into [PROB_CLAMP, 1 - PROB_CLAMP] so the
# cross-entropy stays finite at sigmoid saturation.
PROB_CLAMP = 1e-7


@dataclass
class ConvLayer:
    weights: np.ndarray  # (filters, in_channels, 3, 3)
    bias: np.ndarray  # (filters,)

    @property
    def filters(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]


@dataclass
class BatchNormLayer:
    gamma: np.ndarray  # (channels,)
    beta: np.ndarray  # (channels,)
    moving_mean: np.ndarray  # (channels,)
    moving_var: np.ndarray  # (channels,)
    momentum: float = 0.99
    epsilon: float = 1e-3

    @property
    def channels(self) -> int:
        return self.gamma.shape[0]


@dataclass
class DenseLayer:
    weights: np.ndarray  # (in_features, 1)
    bias: np.ndarray  # (1,); scalar bias kept as a length-1 array

    @property
    def in_features(self) -> int:
        return self.weights.shape[0]


@dataclass
class LayerGradients:
    """Gradient bundle for one layer; unused fields stay None."""

    d_input: np.ndarray
    d_weights: np.ndarray | None = None
    d_bias: np.ndarray | None = None
    d_gamma: np.ndarray | None = None
    d_beta: np.ndarray | None = None


@dataclass
class BatchNormCache:
    training: bool
    x: np.ndarray | None = None
    xhat: np.ndarray | None = None
    var: np.ndarray | None = None
    inv_std: np.ndarray | None = None


def _im2col(x: np.ndarray) -> np.ndarray:
    """(n, c, h, w) -> (n*(h-2)*(w-2), c*9) patch matrix."""
    win = np.lib.stride_tricks.sliding_window_view(x, (KERNEL, KERNEL), axis=(2, 3))
    n, c, ho, wo = win.shape[:4]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * KERNEL * KERNEL)


def conv2d_forward(x: np.ndarray, layer: ConvLayer) -> np.ndarray:
    """out(i,f,y,x) = bias(f) + sum_{c,dy,dx} w(f,c,dy,dx) * x(i,c,y+dy,x+dx)."""
    require_rank(x, 4, "conv input")
    n, c, h, w = x.shape
    if h < KERNEL or w < KERNEL:
        raise ShapeError(f"conv input spatial dims must be >= {KERNEL}, got {h}x{w}")
    if c != layer.in_channels:
        raise ShapeError(
            f"conv input has {c} channels, layer expects {layer.in_channels}"
        )
    ho, wo = h - KERNEL + 1, w - KERNEL + 1
    k = layer.filters
    cols = _im2col(x)
    wmat = layer.weights.reshape(k, -1)
    out = cols @ wmat.T
    out = out.reshape(n, ho, wo, k).transpose(0, 3, 1, 2)
    return out + layer.bias.reshape(1, k, 1, 1)


def conv2d_backward(
    x: np.ndarray, layer: ConvLayer, upstream: np.ndarray
) -> LayerGradients:
    """Gradients of conv2d_forward under sum(upstream * output)."""
    require_rank(x, 4, "conv input")
    require_rank(upstream, 4, "conv upstream")
    n, c, h, w = x.shape
    ho, wo = h - KERNEL + 1, w - KERNEL + 1
    k = layer.filters
    if upstream.shape != (n, k, ho, wo):
        raise ShapeError(
            f"conv upstream shape {upstream.shape} != forward output "
            f"shape {(n, k, ho, wo)}"
        )
    cols = _im2col(x)
    up_mat = upstream.transpose(0, 2, 3, 1).reshape(n * ho * wo, k)
    wmat = layer.weights.reshape(k, -1)

    d_weights = (up_mat.T @ cols).reshape(layer.weights.shape)
    d_bias = upstream.sum(axis=(0, 2, 3))

    dcols = (up_mat @ wmat).reshape(n, ho, wo, c, KERNEL, KERNEL)
    dcols = dcols.transpose(0, 3, 1, 2, 4, 5)  # (n, c, ho, wo, 3, 3)
    d_input = np.zeros_like(x)
    for dy in range(KERNEL):
        for dx in range(KERNEL):
            d_input[:, :, dy : dy + ho, dx : dx + wo] += dcols[:, :, :, :, dy, dx]
    return LayerGradients(d_input=d_input, d_weights=d_weights, d_bias=d_bias)


def batchnorm_forward(
    x: np.ndarray, layer: BatchNormLayer, training: bool
) -> tuple[np.ndarray, BatchNormCache]:
    """Per-channel standardization over (n, h, w), then affine gamma/beta.

    Training mode normalizes with batch statistics (biased variance) and
    updates the moving statistics in place:
    moving <- momentum * moving + (1 - momentum) * batch.
    Inference mode uses the moving statistics and mutates nothing.
    """
    require_rank(x, 4, "batchnorm input")
    c = x.shape[1]
    if c != layer.channels:
        raise ShapeError(f"batchnorm input has {c} channels, layer has {layer.channels}")
    gamma = layer.gamma.reshape(1, c, 1, 1)
    beta = layer.beta.reshape(1, c, 1, 1)

    if not training:
        inv_std = 1.0 / np.sqrt(layer.moving_var + layer.epsilon)
        xhat = (x - layer.moving_mean.reshape(1, c, 1, 1)) * inv_std.reshape(1, c, 1, 1)
        return gamma * xhat + beta, BatchNormCache(training=False)

    n, _, h, w = x.shape
    if n * h * w < 2:
        raise DegenerateBatchError(
            f"batchnorm training mode needs >= 2 samples per channel, got {n * h * w}"
        )
    mean = x.mean(axis=(0, 2, 3))
    var = x.var(axis=(0, 2, 3))
    inv_std = 1.0 / np.sqrt(var + layer.epsilon)
    xhat = (x - mean.reshape(1, c, 1, 1)) * inv_std.reshape(1, c, 1, 1)
    out = gamma * xhat + beta

    m = layer.momentum
    layer.moving_mean[:] = m * layer.moving_mean + (1.0 - m) * mean
    layer.moving_var[:] = m * layer.moving_var + (1.0 - m) * var
    return out, BatchNormCache(training=True, x=x, xhat=xhat, var=var, inv_std=inv_std)


def batchnorm_backward(
    cache: BatchNormCache, layer: BatchNormLayer, upstream: np.ndarray
) -> LayerGradients:
    """Full training-mode gradient, including the mean/variance dependence."""
    if not cache.training:
        raise ContractError("batchnorm_backward requires a training-mode cache")
    if np.any(cache.var == 0.0):
        # The normalized output is constant in every direction that keeps the
        # channel constant; gradients through 1/sqrt(var+eps) are meaningless.
        raise DegenerateBatchError(
            "batchnorm gradient undefined for zero-variance channel"
        )
    require_rank(upstream, 4, "batchnorm upstream")
    if upstream.shape != cache.xhat.shape:
        raise ShapeError(
            f"batchnorm upstream shape {upstream.shape} != {cache.xhat.shape}"
        )
    c = layer.channels
    n, _, h, w = upstream.shape
    count = n * h * w

    d_gamma = (upstream * cache.xhat).sum(axis=(0, 2, 3))
    d_beta = upstream.sum(axis=(0, 2, 3))

    dxhat = upstream * layer.gamma.reshape(1, c, 1, 1)
    sum_dxhat = dxhat.sum(axis=(0, 2, 3), keepdims=True)
    sum_dxhat_xhat = (dxhat * cache.xhat).sum(axis=(0, 2, 3), keepdims=True)
    inv_std = cache.inv_std.reshape(1, c, 1, 1)
    d_input = (inv_std / count) * (
        count * dxhat - sum_dxhat - cache.xhat * sum_dxhat_xhat
    )
    return LayerGradients(d_input=d_input, d_gamma=d_gamma, d_beta=d_beta)


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Subgradient 0 at exactly 0."""
    if x.shape != upstream.shape:
        raise ShapeError(f"relu upstream shape {upstream.shape} != input {x.shape}")
    return upstream * (x > 0)


def dense_forward(x: np.ndarray, layer: DenseLayer) -> np.ndarray:
    """logit(i) = sum_j x(i, j) * w(j) + b; returns a length-n vector."""
    require_rank(x, 2, "dense input")
    if x.shape[1] != layer.in_features:
        raise ShapeError(
            f"dense input has {x.shape[1]} features, layer expects {layer.in_features}"
        )
    return x @ layer.weights[:, 0] + layer.bias[0]


def dense_backward(
    x: np.ndarray, layer: DenseLayer, d_logits: np.ndarray
) -> LayerGradients:
    require_rank(x, 2, "dense input")
    if d_logits.shape != (x.shape[0],):
        raise ShapeError(
            f"dense upstream shape {d_logits.shape} != ({x.shape[0]},)"
        )
    d_weights = (x.T @ d_logits).reshape(layer.weights.shape)
    d_bias = np.array([d_logits.sum()], dtype=d_logits.dtype)
    d_input = np.outer(d_logits, layer.weights[:, 0])
    return LayerGradients(d_input=d_input, d_weights=d_weights, d_bias=d_bias)


def sigmoid(logits: np.ndarray) -> np.ndarray:
    """1 / (1 + exp(-z)), clamped into [PROB_CLAMP, 1 - PROB_CLAMP]."""
    z = np.asarray(logits)
    p = np.exp(-np.logaddexp(z.dtype.type(0), -z))  # stable at large |z|
    return np.clip(p, z.dtype.type(PROB_CLAMP), z.dtype.type(1.0 - PROB_CLAMP))


def bce_loss(
    probabilities: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy and the fused gradient w.r.t. the logits.

    loss = -mean(y*ln(p) + (1-y)*ln(1-p)); d_logits = (p - y) / n is the
    exact gradient through the (unclamped) sigmoid, used for stability.
    """
    p = np.asarray(probabilities)
    y = np.asarray(labels)
    if p.ndim != 1 or y.shape != p.shape:
        raise ContractError(
            f"bce_loss needs equal-length vectors, got {p.shape} and {y.shape}"
        )
    if p.size == 0:
        raise ContractError("bce_loss: empty input")
    if not np.all((y == 0) | (y == 1)):
        raise ContractError("bce_loss: labels must be 0 or 1")
    p64 = p.astype(np.float64)
    y64 = y.astype(np.float64)
    loss = float(-np.mean(y64 * np.log(p64) + (1.0 - y64) * np.log1p(-p64)))
    d_logits = ((p - y.astype(p.dtype)) / p.dtype.type(p.size)).astype(p.dtype)
    return loss, d_logits
