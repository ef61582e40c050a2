"""The symmetric encoder-decoder restoration network.

Four stride-2 convolutions (each followed by batch normalization and a
LeakyReLU) encode a 64x64 image down to a 4x4 latent block, a channel-wise
fully-connected layer mixes information spatially within each feature map,
and four stride-2 transposed convolutions decode back to the input size.
Decoder activations are ReLU except the final Tanh, so outputs always lie
in (-1, 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericError
from .ops import (
    BatchNormState,
    activation_backward,
    activation_forward,
    batchnorm_backward,
    batchnorm_forward,
    channelwise_fc_backward,
    channelwise_fc_forward,
    conv2d_backward,
    conv2d_forward,
    deconv2d_backward,
    deconv2d_forward,
    mse_loss,
)
from .optim import OptimizerConfig, adam_step
from .rng import derive_rng
from .tensor import LayerConfig, Parameter, Tensor4

WEIGHT_INIT_STD = 0.02


@dataclass
class NetworkConfig:
    """Geometry and initialization seed for the encoder-decoder."""

    input_channels: int = 3
    input_size: int = 64
    encoder_channels: tuple[int, ...] = (64, 128, 256, 512)
    latent_spatial: int = 4
    seed: int = 0
    dtype: str = "float64"
    task: str | None = None  # annotation only; carried into checkpoints

    def __post_init__(self) -> None:
        self.encoder_channels = tuple(int(c) for c in self.encoder_channels)
        if self.input_channels not in (1, 3):
            raise ConfigurationError(
                f"input_channels must be 1 or 3, got {self.input_channels}"
            )
        if self.input_size // (2 ** len(self.encoder_channels)) != self.latent_spatial \
                or self.input_size % (2 ** len(self.encoder_channels)) != 0:
            raise ConfigurationError(
                f"input_size {self.input_size} with {len(self.encoder_channels)} "
                f"stride-2 layers does not reach latent_spatial {self.latent_spatial}"
            )
        if self.dtype not in ("float32", "float64"):
            raise ConfigurationError(f"dtype must be float32 or float64, got {self.dtype}")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64


class ConvLayer:
    def __init__(self, cfg: LayerConfig, rng, dtype, name: str,
                 needs_input_grad: bool = True):
        self.cfg = cfg
        kh, kw = cfg.kernel
        w = rng.normal(0.0, WEIGHT_INIT_STD,
                       (cfg.out_channels, cfg.in_channels, kh, kw))
        self.weights = Parameter(w.astype(dtype), f"{name}.weights")
        self.bias = Parameter(np.zeros(cfg.out_channels, dtype=dtype), f"{name}.bias")
        self.name = name
        self.needs_input_grad = needs_input_grad
        self._x = None
        self._cols = None

    def forward(self, x: Tensor4, train: bool) -> Tensor4:
        if train:
            y, self._cols = conv2d_forward(x, self.weights, self.bias, self.cfg,
                                           return_cols=True)
            self._x = x
            return y
        self._x = self._cols = None
        return conv2d_forward(x, self.weights, self.bias, self.cfg)

    def backward(self, upstream: Tensor4) -> Tensor4:
        gx, _, _ = conv2d_backward(self._x, upstream, self.weights, self.cfg,
                                   bias=self.bias, cols=self._cols,
                                   need_input_grad=self.needs_input_grad)
        self._cols = None
        return gx

    def parameters(self):
        return [self.weights, self.bias]


class DeconvLayer:
    def __init__(self, cfg: LayerConfig, rng, dtype, name: str):
        self.cfg = cfg
        kh, kw = cfg.kernel
        w = rng.normal(0.0, WEIGHT_INIT_STD,
                       (cfg.in_channels, cfg.out_channels, kh, kw))
        self.weights = Parameter(w.astype(dtype), f"{name}.weights")
        self.bias = Parameter(np.zeros(cfg.out_channels, dtype=dtype), f"{name}.bias")
        self.name = name
        self._x = None

    def forward(self, x: Tensor4, train: bool) -> Tensor4:
        self._x = x if train else None
        return deconv2d_forward(x, self.weights, self.bias, self.cfg)

    def backward(self, upstream: Tensor4) -> Tensor4:
        gx, _, _ = deconv2d_backward(self._x, upstream, self.weights, self.cfg,
                                     bias=self.bias)
        return gx

    def parameters(self):
        return [self.weights, self.bias]


class BatchNormLayer:
    def __init__(self, cfg: LayerConfig, dtype, name: str):
        self.cfg = cfg
        c = cfg.in_channels
        self.gamma = Parameter(np.ones(c, dtype=dtype), f"{name}.gamma")
        self.beta = Parameter(np.zeros(c, dtype=dtype), f"{name}.beta")
        self.state = BatchNormState.identity(c, dtype=dtype)
        self.name = name
        self._cache = None

    def forward(self, x: Tensor4, train: bool) -> Tensor4:
        y, cache = batchnorm_forward(x, self.gamma, self.beta, self.cfg,
                                     self.state, train)
        self._cache = cache if train else None
        return y

    def backward(self, upstream: Tensor4) -> Tensor4:
        gx, _, _ = batchnorm_backward(self._cache, upstream, self.gamma, self.beta)
        return gx

    def parameters(self):
        return [self.gamma, self.beta]


class ActivationLayer:
    def __init__(self, cfg: LayerConfig, name: str):
        self.cfg = cfg
        self.name = name
        self._x = None

    def forward(self, x: Tensor4, train: bool) -> Tensor4:
        self._x = x if train else None
        return activation_forward(x, self.cfg.kind, self.cfg.negative_slope)

    def backward(self, upstream: Tensor4) -> Tensor4:
        return activation_backward(self._x, upstream, self.cfg.kind,
                                   self.cfg.negative_slope)

    def parameters(self):
        return []


class ChannelwiseFCLayer:
    def __init__(self, cfg: LayerConfig, spatial: int, rng, dtype, name: str):
        self.cfg = cfg
        c, k = cfg.in_channels, spatial * spatial
        self.spatial = spatial
        w = rng.normal(0.0, WEIGHT_INIT_STD, (c, k, k))
        self.weights = Parameter(w.astype(dtype), f"{name}.weights")
        self.bias = Parameter(np.zeros((c, k), dtype=dtype), f"{name}.bias")
        self.name = name
        self._x = None

    def forward(self, x: Tensor4, train: bool) -> Tensor4:
        self._x = x if train else None
        return channelwise_fc_forward(x, self.weights, self.bias)

    def backward(self, upstream: Tensor4) -> Tensor4:
        gx, _, _ = channelwise_fc_backward(self._x, upstream, self.weights,
                                           bias=self.bias)
        return gx

    def parameters(self):
        return [self.weights, self.bias]


class EncoderDecoder:
    """Ordered layer pipeline with train/eval mode."""

    kind = "encoder_decoder"

    def __init__(self, cfg: NetworkConfig, layers: list):
        self.cfg = cfg
        self.layers = layers
        self.mode = "train"

    # -- mode -------------------------------------------------------------
    def train(self) -> "EncoderDecoder":
        self.mode = "train"
        return self

    def eval(self) -> "EncoderDecoder":
        self.mode = "eval"
        return self

    @property
    def input_size(self) -> int:
        return self.cfg.input_size

    @property
    def input_channels(self) -> int:
        return self.cfg.input_channels

    # -- passes -----------------------------------------------------------
    def forward(self, x: Tensor4, train: bool | None = None) -> Tensor4:
        if train is None:
            train = self.mode == "train"
        x = np.ascontiguousarray(x, dtype=self.cfg.np_dtype)
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, upstream: Tensor4) -> Tensor4:
        for layer in reversed(self.layers):
            upstream = layer.backward(upstream)
        return upstream

    def parameters(self) -> list[Parameter]:
        out = []
        for layer in self.layers:
            out.extend(layer.parameters())
        return out

    def parameter_count(self) -> int:
        return sum(p.value.size for p in self.parameters())

    def batchnorm_layers(self) -> list[BatchNormLayer]:
        return [l for l in self.layers if isinstance(l, BatchNormLayer)]


class IdentityNet:
    """Pass-through stand-in with the network interface, for stub pipelines."""

    kind = "identity"

    def __init__(self, input_channels: int = 3, input_size: int = 64):
        self.input_channels = input_channels
        self.input_size = input_size
        self.mode = "eval"
        self.cfg = None

    def train(self) -> "IdentityNet":
        self.mode = "train"
        return self

    def eval(self) -> "IdentityNet":
        self.mode = "eval"
        return self

    def forward(self, x: Tensor4, train: bool | None = None) -> Tensor4:
        return x

    def parameters(self):
        return []


def build_network(cfg: NetworkConfig) -> EncoderDecoder:
    """Deterministic construction: (seed, cfg) fully determine the weights."""
    rng = derive_rng("network-init", cfg.seed)
    dtype = cfg.np_dtype
    layers: list = []

    prev = cfg.input_channels
    for i, ch in enumerate(cfg.encoder_channels, start=1):
        conv_cfg = LayerConfig("conv", in_channels=prev, out_channels=ch,
                               kernel=(4, 4), stride=2, padding=1)
        layers.append(ConvLayer(conv_cfg, rng, dtype, f"enc{i}_conv",
                                needs_input_grad=(i > 1)))
        bn_cfg = LayerConfig("batchnorm", in_channels=ch, out_channels=ch)
        layers.append(BatchNormLayer(bn_cfg, dtype, f"enc{i}_bn"))
        act_cfg = LayerConfig("leaky_relu", in_channels=ch, out_channels=ch,
                              negative_slope=0.2)
        layers.append(ActivationLayer(act_cfg, f"enc{i}_lrelu"))
        prev = ch

    fc_cfg = LayerConfig("channelwise_fc", in_channels=prev, out_channels=prev)
    layers.append(ChannelwiseFCLayer(fc_cfg, cfg.latent_spatial, rng, dtype, "latent_fc"))

    decoder_channels = tuple(reversed(cfg.encoder_channels[:-1])) + (cfg.input_channels,)
    for i, ch in enumerate(decoder_channels, start=1):
        deconv_cfg = LayerConfig("deconv", in_channels=prev, out_channels=ch,
                                 kernel=(4, 4), stride=2, padding=1)
        layers.append(DeconvLayer(deconv_cfg, rng, dtype, f"dec{i}_deconv"))
        last = i == len(decoder_channels)
        act_kind = "tanh" if last else "relu"
        act_cfg = LayerConfig(act_kind, in_channels=ch, out_channels=ch)
        layers.append(ActivationLayer(act_cfg, f"dec{i}_{act_kind}"))
        prev = ch

    return EncoderDecoder(cfg, layers)


def restore(net, corrupted: Tensor4) -> Tensor4:
    """Eval-mode forward pass f(C, w); deterministic for a fixed network."""
    n, c, h, w = corrupted.shape
    size = net.input_size
    if h != size or w != size:
        raise ConfigurationError(
            f"restore expects {size}x{size} inputs, got {h}x{w}; "
            f"use tile_restore for arbitrary-size images"
        )
    if c != net.input_channels:
        raise ConfigurationError(
            f"restore expects {net.input_channels} channels, got {c}"
        )
    return net.forward(corrupted, train=False)


def train_step(net: EncoderDecoder, corrupted_batch: Tensor4, target_batch: Tensor4,
               optimizer_cfg: OptimizerConfig | None = None) -> float:
    """One forward/loss/backward/ADAM cycle; returns the pre-update batch loss."""
    opt = optimizer_cfg or OptimizerConfig()
    target = np.ascontiguousarray(target_batch, dtype=net.cfg.np_dtype)
    out = net.forward(corrupted_batch, train=True)
    loss, grad = mse_loss(out, target)
    if not np.isfinite(loss):
        raise NumericError(f"non-finite training loss {loss}")
    net.backward(grad)
    adam_step(net.parameters(), lr=opt.lr, beta1=opt.beta1, beta2=opt.beta2,
              eps=opt.eps)
    return loss
