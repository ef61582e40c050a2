"""Forward and backward passes for every layer of the restoration network.

Convolutions are computed by an im2col restructuring followed by one GEMM;
the transposed convolution is implemented literally as the linear adjoint of
the convolution core, which makes the adjoint identity
``<conv(x, W), y> == <x, deconv(y, W)>`` hold to rounding error.

Backward passes compute gradients of the scalar ``<upstream, output>`` with
respect to each argument. When a ``Parameter`` is supplied, its gradient is
also accumulated into ``.grad`` so a training loop can drive ADAM directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .tensor import LayerConfig, Parameter, Tensor4, require_same_shape, require_tensor4


# ---------------------------------------------------------------------------
# convolution core
# ---------------------------------------------------------------------------

def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, padding: int):
    """Unfold sliding windows into a (n, c*kh*kw, oh*ow) stack.

    Built from kh*kw strided slice copies, so no large transposed gather is
    needed and the result feeds batched GEMM directly.
    """
    n, c, h, w = x.shape
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    hp, wp = x.shape[2], x.shape[3]
    if hp < kh or wp < kw:
        raise ConfigurationError(
            f"padded spatial extent ({hp}, {wp}) smaller than kernel ({kh}, {kw})"
        )
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1
    buf = np.empty((n, c, kh, kw, oh, ow), dtype=x.dtype)
    for i in range(kh):
        rows = slice(i, i + stride * oh, stride)
        for j in range(kw):
            buf[:, :, i, j] = x[:, :, rows, j:j + stride * ow:stride]
    return buf.reshape(n, c * kh * kw, oh * ow), oh, ow


def _col2im(cols: np.ndarray, n: int, c: int, h: int, w: int,
            kh: int, kw: int, stride: int, padding: int, oh: int, ow: int):
    """Adjoint of _im2col: scatter-add the window stack back onto the canvas."""
    hp, wp = h + 2 * padding, w + 2 * padding
    xpad = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    view = cols.reshape(n, c, kh, kw, oh, ow)
    for i in range(kh):
        rows = slice(i, i + stride * oh, stride)
        for j in range(kw):
            xpad[:, :, rows, j:j + stride * ow:stride] += view[:, :, i, j]
    if padding:
        return np.ascontiguousarray(xpad[:, :, padding:hp - padding, padding:wp - padding])
    return xpad


def _as_array(p) -> np.ndarray:
    return p.value if isinstance(p, Parameter) else np.asarray(p)


def _accumulate(p, grad: np.ndarray) -> None:
    if isinstance(p, Parameter):
        p.grad += grad


# ---------------------------------------------------------------------------
# conv / deconv
# ---------------------------------------------------------------------------

def conv2d_forward(x: Tensor4, weights, bias, cfg: LayerConfig,
                   return_cols: bool = False):
    """Strided 2-D convolution with zero padding.

    weights: (out_channels, in_channels, kh, kw); bias: (out_channels,).
    With ``return_cols`` the im2col matrix is returned too, for reuse in
    the backward pass.
    """
    require_tensor4(x, "conv input")
    w = _as_array(weights)
    b = _as_array(bias)
    n, c, h, wd = x.shape
    if c != cfg.in_channels:
        raise ConfigurationError(
            f"conv input has {c} channels, config expects {cfg.in_channels}"
        )
    kh, kw = cfg.kernel
    cfg.conv_output_hw(h, wd)
    cols, oh, ow = _im2col(x, kh, kw, cfg.stride, cfg.padding)
    wf = w.reshape(cfg.out_channels, -1)
    y = np.matmul(wf[None], cols).reshape(n, cfg.out_channels, oh, ow)
    y += b[None, :, None, None]
    if return_cols:
        return y, cols
    return y


def conv2d_backward(x: Tensor4, upstream: Tensor4, weights, cfg: LayerConfig,
                    bias=None, cols: np.ndarray | None = None,
                    need_input_grad: bool = True):
    """Gradients of <upstream, conv2d_forward(x, W, b)> w.r.t. x, W, b.

    ``cols`` may pass the forward pass's im2col matrix to avoid recomputing
    it; ``need_input_grad=False`` skips grad_x (first-layer optimization).
    """
    w = _as_array(weights)
    n, c, h, wd = x.shape
    kh, kw = cfg.kernel
    oh, ow = cfg.conv_output_hw(h, wd)
    if upstream.shape != (n, cfg.out_channels, oh, ow):
        raise ConfigurationError(
            f"conv upstream shape {upstream.shape} != expected "
            f"{(n, cfg.out_channels, oh, ow)}"
        )
    if cols is None:
        cols, _, _ = _im2col(x, kh, kw, cfg.stride, cfg.padding)
    wf = w.reshape(cfg.out_channels, -1)
    up3 = upstream.reshape(n, cfg.out_channels, oh * ow)
    grad_w = np.matmul(up3, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
    grad_b = upstream.sum(axis=(0, 2, 3))
    if need_input_grad:
        grad_cols = np.matmul(wf.T[None], up3)
        grad_x = _col2im(grad_cols, n, c, h, wd, kh, kw, cfg.stride, cfg.padding,
                         oh, ow)
    else:
        grad_x = None
    _accumulate(weights, grad_w)
    _accumulate(bias, grad_b)
    return grad_x, grad_w, grad_b


def deconv2d_forward(x: Tensor4, weights, bias, cfg: LayerConfig) -> Tensor4:
    """Transposed convolution: the linear adjoint of conv2d_forward.

    weights: (in_channels, out_channels, kh, kw); bias: (out_channels,).
    A stride-2 4x4-kernel pad-1 layer doubles both spatial extents.
    """
    require_tensor4(x, "deconv input")
    w = _as_array(weights)
    b = _as_array(bias)
    n, c, h, wd = x.shape
    if c != cfg.in_channels:
        raise ConfigurationError(
            f"deconv input has {c} channels, config expects {cfg.in_channels}"
        )
    kh, kw = cfg.kernel
    oh, ow = cfg.deconv_output_hw(h, wd)
    wf = w.reshape(c, -1)
    cols = np.matmul(wf.T[None], x.reshape(n, c, h * wd))
    y = _col2im(cols, n, cfg.out_channels, oh, ow, kh, kw, cfg.stride, cfg.padding,
                h, wd)
    y += b[None, :, None, None]
    return y


def deconv2d_backward(x: Tensor4, upstream: Tensor4, weights, cfg: LayerConfig,
                      bias=None):
    """Gradients of <upstream, deconv2d_forward(x, W, b)> w.r.t. x, W, b."""
    w = _as_array(weights)
    n, c, h, wd = x.shape
    kh, kw = cfg.kernel
    oh, ow = cfg.deconv_output_hw(h, wd)
    if upstream.shape != (n, cfg.out_channels, oh, ow):
        raise ConfigurationError(
            f"deconv upstream shape {upstream.shape} != expected "
            f"{(n, cfg.out_channels, oh, ow)}"
        )
    # <u, deconv(x, W)> == <conv(u, W), x>: reuse the conv machinery with the
    # roles of input and output swapped.
    ucols, uoh, uow = _im2col(upstream, kh, kw, cfg.stride, cfg.padding)
    wf = w.reshape(c, -1)
    grad_x = np.matmul(wf[None], ucols).reshape(n, c, uoh, uow)
    x3 = x.reshape(n, c, h * wd)
    grad_w = np.matmul(x3, ucols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
    grad_b = upstream.sum(axis=(0, 2, 3))
    _accumulate(weights, grad_w)
    _accumulate(bias, grad_b)
    return grad_x, grad_w, grad_b


# ---------------------------------------------------------------------------
# batch normalization
# ---------------------------------------------------------------------------

@dataclass
class BatchNormState:
    """Running statistics updated by exponential moving average in train mode."""

    mean: np.ndarray
    var: np.ndarray
    initialized: bool = False

    @classmethod
    def identity(cls, channels: int, dtype=np.float64) -> "BatchNormState":
        """Explicit (mean 0, var 1) initialization; marks the state usable."""
        return cls(np.zeros(channels, dtype=dtype), np.ones(channels, dtype=dtype),
                   initialized=True)


@dataclass
class BatchNormCache:
    x: np.ndarray
    xhat: np.ndarray
    inv_std: np.ndarray
    train: bool


def batchnorm_forward(x: Tensor4, gamma, beta, cfg: LayerConfig,
                      state: BatchNormState, train: bool):
    """Per-channel normalization over (n, h, w) with affine transform.

    Train mode normalizes with batch statistics and updates the running
    mean/var by EMA with ``cfg.momentum``. Eval mode uses the running
    statistics, which must have been initialized first.
    """
    require_tensor4(x, "batchnorm input")
    g = _as_array(gamma)
    b = _as_array(beta)
    n, c, h, w = x.shape
    if train:
        if n * h * w < 2:
            raise ConfigurationError(
                f"batchnorm train mode needs n*h*w >= 2 per channel, got {n * h * w}"
            )
        mu = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        m = cfg.momentum
        state.mean = (1.0 - m) * state.mean + m * mu
        state.var = (1.0 - m) * state.var + m * var
        state.initialized = True
    else:
        if not state.initialized:
            raise ConfigurationError(
                "batchnorm eval mode before any train-mode update; "
                "initialize running stats explicitly (mean 0, var 1) first"
            )
        mu = state.mean
        var = state.var
    inv_std = 1.0 / np.sqrt(var + cfg.epsilon)
    xhat = x - mu[None, :, None, None]
    xhat *= inv_std[None, :, None, None]
    y = xhat * g[None, :, None, None]
    y += b[None, :, None, None]
    return y, BatchNormCache(x=x, xhat=xhat, inv_std=inv_std, train=train)


def batchnorm_backward(cache: BatchNormCache, upstream: Tensor4, gamma, beta=None):
    """Gradients w.r.t. input, gamma, beta for the cached forward pass."""
    g = _as_array(gamma)
    require_same_shape(upstream, cache.xhat, "batchnorm upstream")
    grad_gamma = (upstream * cache.xhat).sum(axis=(0, 2, 3))
    grad_beta = upstream.sum(axis=(0, 2, 3))
    dxhat = upstream * g[None, :, None, None]
    if cache.train:
        n, c, h, w = upstream.shape
        m = n * h * w
        s1 = dxhat.sum(axis=(0, 2, 3))[None, :, None, None]
        s2 = (dxhat * cache.xhat).sum(axis=(0, 2, 3))[None, :, None, None]
        grad_x = (cache.inv_std[None, :, None, None] / m) * (
            m * dxhat - s1 - cache.xhat * s2
        )
    else:
        grad_x = dxhat * cache.inv_std[None, :, None, None]
    _accumulate(gamma, grad_gamma)
    _accumulate(beta, grad_beta)
    return grad_x, grad_gamma, grad_beta


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

def activation_forward(x: Tensor4, kind: str, negative_slope: float = 0.2) -> Tensor4:
    """Elementwise nonlinearity; output shape equals input shape."""
    if kind == "relu":
        return np.maximum(x, 0)
    if kind == "leaky_relu":
        return np.where(x >= 0, x, negative_slope * x)
    if kind == "tanh":
        return np.tanh(x)
    raise ConfigurationError(f"unknown activation kind {kind!r}")


def activation_backward(x: Tensor4, upstream: Tensor4, kind: str,
                        negative_slope: float = 0.2) -> Tensor4:
    require_same_shape(upstream, x, "activation upstream")
    if kind == "relu":
        return upstream * (x >= 0)
    if kind == "leaky_relu":
        return upstream * np.where(x >= 0, 1.0, negative_slope).astype(x.dtype)
    if kind == "tanh":
        t = np.tanh(x)
        return upstream * (1.0 - t * t)
    raise ConfigurationError(f"unknown activation kind {kind!r}")


# ---------------------------------------------------------------------------
# channel-wise fully-connected bottleneck
# ---------------------------------------------------------------------------

def channelwise_fc_forward(x: Tensor4, weights, bias) -> Tensor4:
    """Independent spatial linear map per channel; no cross-channel mixing.

    weights: (C, h*w, h*w) one square matrix per channel; bias: (C, h*w).
    """
    require_tensor4(x, "channelwise_fc input")
    w = _as_array(weights)
    b = _as_array(bias)
    n, c, h, wd = x.shape
    k = h * wd
    if w.shape != (c, k, k):
        raise ConfigurationError(
            f"channelwise_fc weights shape {w.shape} inconsistent with "
            f"(C={c}, h*w={k}): expected {(c, k, k)}"
        )
    xt = x.reshape(n, c, k).transpose(1, 2, 0)        # (c, k, n)
    yt = w @ xt                                        # (c, k, n)
    y = yt.transpose(2, 0, 1) + b[None]
    return np.ascontiguousarray(y.reshape(n, c, h, wd))


def channelwise_fc_backward(x: Tensor4, upstream: Tensor4, weights, bias=None):
    """Gradients w.r.t. input, per-channel matrices, and bias."""
    w = _as_array(weights)
    n, c, h, wd = x.shape
    k = h * wd
    require_same_shape(upstream, x, "channelwise_fc upstream")
    ut = upstream.reshape(n, c, k).transpose(1, 2, 0)  # (c, k, n)
    xt = x.reshape(n, c, k).transpose(1, 2, 0)         # (c, k, n)
    grad_w = ut @ xt.transpose(0, 2, 1)                # (c, k, k)
    grad_b = ut.sum(axis=2)                            # (c, k)
    gxt = w.transpose(0, 2, 1) @ ut                    # (c, k, n)
    grad_x = np.ascontiguousarray(gxt.transpose(2, 0, 1).reshape(n, c, h, wd))
    _accumulate(weights, grad_w)
    _accumulate(bias, grad_b)
    return grad_x, grad_w, grad_b


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------

def mse_loss(restored: Tensor4, target: Tensor4):
    """Mean squared error over all elements, with its gradient.

    Returns (loss, grad) where grad = 2 * (restored - target) / count.
    """
    require_same_shape(restored, target, "mse_loss")
    diff = restored - target
    loss = float(np.mean(diff * diff, dtype=np.float64))
    grad = diff * (2.0 / diff.size)
    return loss, grad
