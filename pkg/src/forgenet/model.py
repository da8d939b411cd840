"""Network assembly, parameter accounting, full passes, and weight files.

The default configuration is 4 conv blocks (4 filters each, 3x3, valid
padding, stride 1), each followed by batch normalization and ReLU, then
flatten and a width-1 dense head with sigmoid output: 58,221 stored
parameters at 3x128x128 input. Moving BN statistics count as stored
parameters but never receive gradients.

Weights file format (all integers little-endian u32, floats little-endian
float32, no padding):

    magic b"FGN1"
    conv_layers, filters, input_h, input_w
    for each tensor in schema order: rank, dims..., raw float32 data

Schema order per conv block i: conv{i}.weights, conv{i}.bias, bn{i}.gamma,
bn{i}.beta, bn{i}.moving_mean, bn{i}.moving_var; then dense.weights,
dense.bias.
"""

from __future__ import annotations

import copy
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import layers as L
from .errors import ConfigError, ContractError, ShapeError, WeightsFormatError
from .tensor import flatten, require_rank, unflatten

MAGIC = b"FGN1"


@dataclass(frozen=True)
class NetworkConfig:
    conv_layers: int = 4
    filters: int = 4
    in_channels: int = 3
    height: int = 128
    width: int = 128
    bn_epsilon: float = 1e-3
    bn_momentum: float = 0.99
    seed: int = 0

    def __post_init__(self):
        if self.conv_layers < 1:
            raise ConfigError(f"conv_layers must be >= 1, got {self.conv_layers}")
        if self.filters < 1:
            raise ConfigError(f"filters must be >= 1, got {self.filters}")
        if self.in_channels < 1:
            raise ConfigError(f"in_channels must be >= 1, got {self.in_channels}")
        # Each valid 3x3 conv shrinks spatial extent by 2; at least one
        # pixel must survive all conv_layers of them.
        min_side = 2 * self.conv_layers + 1
        if self.height < min_side or self.width < min_side:
            raise ConfigError(
                f"input {self.height}x{self.width} too small for "
                f"{self.conv_layers} valid convolutions (needs >= {min_side})"
            )
        if not (0.0 < self.bn_momentum < 1.0):
            raise ConfigError(f"bn_momentum must be in (0,1), got {self.bn_momentum}")
        if self.bn_epsilon <= 0.0:
            raise ConfigError(f"bn_epsilon must be > 0, got {self.bn_epsilon}")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")

    @property
    def feature_height(self) -> int:
        return self.height - 2 * self.conv_layers

    @property
    def feature_width(self) -> int:
        return self.width - 2 * self.conv_layers

    @property
    def dense_in_features(self) -> int:
        return self.filters * self.feature_height * self.feature_width


@dataclass
class Network:
    config: NetworkConfig
    convs: list[L.ConvLayer]
    bns: list[L.BatchNormLayer]
    dense: L.DenseLayer

    def parameters(self) -> dict[str, np.ndarray]:
        """Trainable tensors in schema order; moving BN stats excluded."""
        out: dict[str, np.ndarray] = {}
        for i, (conv, bn) in enumerate(zip(self.convs, self.bns)):
            out[f"conv{i}.weights"] = conv.weights
            out[f"conv{i}.bias"] = conv.bias
            out[f"bn{i}.gamma"] = bn.gamma
            out[f"bn{i}.beta"] = bn.beta
        out["dense.weights"] = self.dense.weights
        out["dense.bias"] = self.dense.bias
        return out

    def state_tensors(self) -> dict[str, np.ndarray]:
        """Every stored tensor in the weights-file schema order."""
        out: dict[str, np.ndarray] = {}
        for i, (conv, bn) in enumerate(zip(self.convs, self.bns)):
            out[f"conv{i}.weights"] = conv.weights
            out[f"conv{i}.bias"] = conv.bias
            out[f"bn{i}.gamma"] = bn.gamma
            out[f"bn{i}.beta"] = bn.beta
            out[f"bn{i}.moving_mean"] = bn.moving_mean
            out[f"bn{i}.moving_var"] = bn.moving_var
        out["dense.weights"] = self.dense.weights
        out["dense.bias"] = self.dense.bias
        return out


def count_parameters(config: NetworkConfig) -> int:
    """Stored-parameter total: conv weights+bias, 4 BN values per channel
    (gamma, beta, moving mean, moving variance), dense weights+bias."""
    f = config.filters
    total = config.in_channels * 9 * f + f  # first conv
    total += (config.conv_layers - 1) * (f * 9 * f + f)  # remaining convs
    total += config.conv_layers * 4 * f  # batch norm
    total += config.dense_in_features + 1  # dense head
    return total


def _glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


def build(config: NetworkConfig) -> Network:
    """Instantiate the network: Glorot-uniform conv/dense weights (seeded),
    zero biases, gamma=1, beta=0, moving_mean=0, moving_var=1."""
    rng = np.random.default_rng(config.seed)
    f = config.filters
    convs: list[L.ConvLayer] = []
    bns: list[L.BatchNormLayer] = []
    c_in = config.in_channels
    for _ in range(config.conv_layers):
        w = _glorot_uniform(rng, (f, c_in, 3, 3), fan_in=c_in * 9, fan_out=f * 9)
        convs.append(L.ConvLayer(weights=w, bias=np.zeros(f, dtype=np.float32)))
        bns.append(
            L.BatchNormLayer(
                gamma=np.ones(f, dtype=np.float32),
                beta=np.zeros(f, dtype=np.float32),
                moving_mean=np.zeros(f, dtype=np.float32),
                moving_var=np.ones(f, dtype=np.float32),
                momentum=config.bn_momentum,
                epsilon=config.bn_epsilon,
            )
        )
        c_in = f
    d = config.dense_in_features
    dense = L.DenseLayer(
        weights=_glorot_uniform(rng, (d, 1), fan_in=d, fan_out=1),
        bias=np.zeros(1, dtype=np.float32),
    )
    net = Network(config=config, convs=convs, bns=bns, dense=dense)
    stored = sum(t.size for t in net.state_tensors().values())
    assert stored == count_parameters(config)
    return net


@dataclass
class ForwardCache:
    training: bool
    conv_inputs: list[np.ndarray] = field(default_factory=list)
    bn_caches: list[L.BatchNormCache] = field(default_factory=list)
    relu_inputs: list[np.ndarray] = field(default_factory=list)
    flat_shape: tuple[int, int, int, int] | None = None
    dense_input: np.ndarray | None = None
    probs: np.ndarray | None = None


def forward(
    net: Network, x: np.ndarray, training: bool
) -> tuple[np.ndarray, ForwardCache]:
    """Run the network; returns clamped probabilities and the backward cache.

    Training mode updates BN moving statistics; inference mode is pure.
    """
    require_rank(x, 4, "network input")
    cfg = net.config
    expected = (cfg.in_channels, cfg.height, cfg.width)
    if x.shape[1:] != expected:
        raise ShapeError(
            f"network input shape {x.shape[1:]} != configured {expected}"
        )
    cache = ForwardCache(training=training)
    h = x
    for conv, bn in zip(net.convs, net.bns):
        cache.conv_inputs.append(h)
        h = L.conv2d_forward(h, conv)
        h, bn_cache = L.batchnorm_forward(h, bn, training=training)
        cache.bn_caches.append(bn_cache)
        cache.relu_inputs.append(h)
        h = L.relu_forward(h)
    cache.flat_shape = h.shape
    flat = flatten(h)
    cache.dense_input = flat
    logits = L.dense_forward(flat, net.dense)
    probs = L.sigmoid(logits)
    cache.probs = probs
    return probs, cache


def backward(
    net: Network, cache: ForwardCache, labels: np.ndarray
) -> dict[str, np.ndarray]:
    """Gradients of the mean BCE loss for every trainable parameter.

    Starts from the fused sigmoid+BCE logit gradient (p - y)/n, so the
    sigmoid never appears as a separate backward step.
    """
    if not cache.training or cache.probs is None:
        raise ContractError("backward requires the cache of a training-mode forward")
    p = cache.probs
    y = np.asarray(labels)
    if y.shape != p.shape:
        raise ContractError(f"labels shape {y.shape} != batch shape {p.shape}")
    d_logits = ((p - y.astype(p.dtype)) / p.dtype.type(p.size)).astype(p.dtype)

    grads: dict[str, np.ndarray] = {}
    dg = L.dense_backward(cache.dense_input, net.dense, d_logits)
    grads["dense.weights"] = dg.d_weights
    grads["dense.bias"] = dg.d_bias
    d = unflatten(dg.d_input, cache.flat_shape)
    for i in reversed(range(len(net.convs))):
        d = L.relu_backward(cache.relu_inputs[i], d)
        bg = L.batchnorm_backward(cache.bn_caches[i], net.bns[i], d)
        grads[f"bn{i}.gamma"] = bg.d_gamma
        grads[f"bn{i}.beta"] = bg.d_beta
        cg = L.conv2d_backward(cache.conv_inputs[i], net.convs[i], bg.d_input)
        grads[f"conv{i}.weights"] = cg.d_weights
        grads[f"conv{i}.bias"] = cg.d_bias
        d = cg.d_input
    return grads


def clone_network(net: Network, dtype=None) -> Network:
    """Deep copy; optional dtype cast (float64 for gradient checking)."""
    out = copy.deepcopy(net)
    if dtype is not None:
        for layer in (*out.convs, *out.bns, out.dense):
            for name, value in vars(layer).items():
                if isinstance(value, np.ndarray):
                    setattr(layer, name, value.astype(dtype))
    return out


def _expected_schema(config: NetworkConfig) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    c_in = config.in_channels
    f = config.filters
    for i in range(config.conv_layers):
        shapes[f"conv{i}.weights"] = (f, c_in, 3, 3)
        shapes[f"conv{i}.bias"] = (f,)
        for part in ("gamma", "beta", "moving_mean", "moving_var"):
            shapes[f"bn{i}.{part}"] = (f,)
        c_in = f
    shapes["dense.weights"] = (config.dense_in_features, 1)
    shapes["dense.bias"] = (1,)
    return shapes


def save_weights(net: Network, destination) -> None:
    cfg = net.config
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<4I", cfg.conv_layers, cfg.filters, cfg.height, cfg.width)
    for tensor in net.state_tensors().values():
        blob += struct.pack("<I", tensor.ndim)
        blob += struct.pack(f"<{tensor.ndim}I", *tensor.shape)
        blob += np.ascontiguousarray(tensor, dtype="<f4").tobytes()
    Path(destination).write_bytes(bytes(blob))


def peek_weights_header(source) -> tuple[int, int, int, int]:
    """(conv_layers, filters, height, width) from a weights file header."""
    data = Path(source).read_bytes()
    if len(data) < 4 or data[:4] != MAGIC:
        raise WeightsFormatError(f"magic: expected {MAGIC!r}, got {data[:4]!r}")
    if len(data) < 20:
        raise WeightsFormatError("header: unexpected end of file")
    return struct.unpack_from("<4I", data, 4)


def load_weights(source, config: NetworkConfig) -> Network:
    """Load a weights file into a network built from `config`.

    Every tensor record is checked against the schema implied by the
    config; the first mismatch is reported by tensor name. Truncated or
    oversized files are rejected.
    """
    data = Path(source).read_bytes()
    header = peek_weights_header(source)
    offset = 20
    net = build(config)
    schema = _expected_schema(config)
    loaded: dict[str, np.ndarray] = {}
    for name, expected_shape in schema.items():
        if offset + 4 > len(data):
            raise WeightsFormatError(f"{name}: unexpected end of file")
        (rank,) = struct.unpack_from("<I", data, offset)
        offset += 4
        if rank != len(expected_shape):
            raise WeightsFormatError(
                f"{name}: file has rank {rank}, config expects rank "
                f"{len(expected_shape)}"
            )
        if offset + 4 * rank > len(data):
            raise WeightsFormatError(f"{name}: unexpected end of file")
        dims = struct.unpack_from(f"<{rank}I", data, offset)
        offset += 4 * rank
        if dims != expected_shape:
            raise WeightsFormatError(
                f"{name}: file has shape {dims}, config expects {expected_shape}"
            )
        count = int(np.prod(dims))
        nbytes = 4 * count
        if offset + nbytes > len(data):
            raise WeightsFormatError(f"{name}: unexpected end of file")
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
        loaded[name] = arr.reshape(dims).copy()
        offset += nbytes
    if offset != len(data):
        raise WeightsFormatError(f"trailing data after {name} ({len(data) - offset} bytes)")
    expected_header = (config.conv_layers, config.filters, config.height, config.width)
    if header != expected_header:
        raise WeightsFormatError(
            f"header: file says {header}, config expects {expected_header}"
        )
    for tensor_name, arr in loaded.items():
        dest = net.state_tensors()[tensor_name]
        dest[...] = arr
    return net
