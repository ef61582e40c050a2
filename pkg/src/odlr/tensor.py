"""Core value types: rank-4 tensors, trainable parameters, layer configs.

Images, activations, and gradients all travel as numpy arrays with shape
(batch, channel, height, width). ``Tensor4`` is an alias documenting that
convention; helpers below enforce it at module boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericError

Tensor4 = np.ndarray  # shape (n, c, h, w)


def require_tensor4(x: np.ndarray, name: str = "tensor") -> np.ndarray:
    if not isinstance(x, np.ndarray) or x.ndim != 4:
        raise ConfigurationError(
            f"{name} must be a rank-4 array (n, c, h, w), got "
            f"{getattr(x, 'shape', type(x))}"
        )
    return x


def require_same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ConfigurationError(f"{what}: shapes differ, {a.shape} vs {b.shape}")


def assert_finite(x: np.ndarray, name: str = "tensor") -> None:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite values in {name}")


class Parameter:
    """A trainable tensor with its gradient and ADAM moment buffers.

    ``grad``, ``adam_m`` and ``adam_v`` always share the value's shape and
    dtype. Moments and step count start at zero.
    """

    __slots__ = ("value", "grad", "adam_m", "adam_v", "step_count", "name")

    def __init__(self, value: np.ndarray, name: str = "") -> None:
        self.value = np.asarray(value)
        self.grad = np.zeros_like(self.value)
        self.adam_m = np.zeros_like(self.value)
        self.adam_v = np.zeros_like(self.value)
        self.step_count = 0
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad[...] = 0

    def astype(self, dtype) -> "Parameter":
        p = Parameter(self.value.astype(dtype), self.name)
        p.grad = self.grad.astype(dtype)
        p.adam_m = self.adam_m.astype(dtype)
        p.adam_v = self.adam_v.astype(dtype)
        p.step_count = self.step_count
        return p

    def __repr__(self) -> str:
        return f"Parameter({self.name or 'unnamed'}, shape={self.value.shape})"


@dataclass
class LayerConfig:
    """Hyper-parameters for one layer of the restoration network."""

    kind: str  # conv | deconv | batchnorm | leaky_relu | relu | tanh | channelwise_fc
    in_channels: int = 0
    out_channels: int = 0
    kernel: tuple[int, int] = (0, 0)
    stride: int = 1
    padding: int = 0
    negative_slope: float = 0.2  # leaky_relu only
    epsilon: float = 1e-5  # batchnorm only
    momentum: float = 0.1  # batchnorm only

    VALID_KINDS = ("conv", "deconv", "batchnorm", "leaky_relu", "relu", "tanh",
                   "channelwise_fc")

    def __post_init__(self) -> None:
        if self.kind not in self.VALID_KINDS:
            raise ConfigurationError(f"unknown layer kind {self.kind!r}")

    def conv_output_hw(self, h: int, w: int) -> tuple[int, int]:
        """Spatial extent after a conv with this config; must be positive."""
        kh, kw = self.kernel
        oh = (h + 2 * self.padding - kh) // self.stride + 1
        ow = (w + 2 * self.padding - kw) // self.stride + 1
        if oh <= 0 or ow <= 0:
            raise ConfigurationError(
                f"conv output spatial dims ({oh}, {ow}) not positive for "
                f"input ({h}, {w}), kernel {self.kernel}, stride {self.stride}, "
                f"padding {self.padding}"
            )
        return oh, ow

    def deconv_output_hw(self, h: int, w: int) -> tuple[int, int]:
        kh, kw = self.kernel
        oh = (h - 1) * self.stride - 2 * self.padding + kh
        ow = (w - 1) * self.stride - 2 * self.padding + kw
        if oh <= 0 or ow <= 0:
            raise ConfigurationError(
                f"deconv output spatial dims ({oh}, {ow}) not positive"
            )
        return oh, ow
