"""Central-difference gradient verification for the layer zoo.

The check forms the scalar s = <upstream, forward()> for a fixed random
upstream tensor, compares analytic gradients from the backward pass against
central finite differences coordinate by coordinate, and reports the max
relative error per tensor. Large tensors are subsampled (at least 200
coordinates). Run in 64-bit; float32 has too little headroom for the
default tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import ops
from .tensor import LayerConfig


@dataclass
class GradCheckEntry:
    name: str
    max_rel_error: float
    coords_checked: int
    passed: bool


@dataclass
class GradCheckReport:
    tolerance: float
    entries: list[GradCheckEntry] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def entry(self, name: str) -> GradCheckEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def __str__(self) -> str:
        lines = [f"grad check (tolerance {self.tolerance:g}):"]
        for e in self.entries:
            status = "ok" if e.passed else "FAIL"
            lines.append(
                f"  {e.name:<12} max rel err {e.max_rel_error:.3e} "
                f"({e.coords_checked} coords) {status}"
            )
        return "\n".join(lines)


def grad_check(forward: Callable[[], np.ndarray],
               backward: Callable[[np.ndarray], dict[str, np.ndarray]],
               tensors: dict[str, np.ndarray],
               tolerance: float = 1e-4,
               perturbation: float = 1e-5,
               max_coords: int = 200,
               seed: int = 0,
               denom_floor: float = 1e-3) -> GradCheckReport:
    """Compare backward() against finite differences of forward().

    ``tensors`` maps names to the arrays the closures read; they are
    perturbed in place and restored. Relative error uses
    |a - n| / max(|a|, |n|, denom_floor) so near-zero coordinates stay
    meaningful instead of amplifying finite-difference noise.
    """
    rng = np.random.default_rng(seed)
    out = forward()
    upstream = rng.standard_normal(out.shape).astype(out.dtype)
    analytic = backward(upstream)

    report = GradCheckReport(tolerance=tolerance)
    for name, arr in tensors.items():
        grad = analytic[name]
        flat = arr.reshape(-1)
        size = flat.size
        if size <= max_coords:
            coords = np.arange(size)
        else:
            coords = rng.choice(size, size=max_coords, replace=False)
        worst = 0.0
        for idx in coords:
            orig = flat[idx]
            flat[idx] = orig + perturbation
            s_plus = float(np.vdot(upstream, forward()))
            flat[idx] = orig - perturbation
            s_minus = float(np.vdot(upstream, forward()))
            flat[idx] = orig
            numeric = (s_plus - s_minus) / (2.0 * perturbation)
            a = float(grad.reshape(-1)[idx])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), denom_floor)
            worst = max(worst, rel)
        report.entries.append(GradCheckEntry(
            name=name, max_rel_error=worst, coords_checked=len(coords),
            passed=worst < tolerance,
        ))
    return report


def _kink_free_normal(rng, shape, kink_margin=1e-3):
    """Normal draws resampled until no coordinate sits near zero."""
    x = rng.standard_normal(shape)
    mask = np.abs(x) < kink_margin
    while mask.any():
        x[mask] = rng.standard_normal(int(mask.sum()))
        mask = np.abs(x) < kink_margin
    return x


def layer_case(kind: str, seed: int = 0):
    """Build (forward, backward, tensors) closures for one layer kind.

    The returned pieces plug straight into grad_check; every layer the
    restoration network uses has a case here.
    """
    rng = np.random.default_rng(seed)
    if kind == "conv":
        cfg = LayerConfig("conv", in_channels=3, out_channels=4, kernel=(4, 4),
                          stride=2, padding=1)
        x = rng.standard_normal((2, 3, 8, 8))
        w = rng.standard_normal((4, 3, 4, 4)) * 0.5
        b = rng.standard_normal(4) * 0.1
        tensors = {"input": x, "weights": w, "bias": b}
        forward = lambda: ops.conv2d_forward(x, w, b, cfg)

        def backward(up):
            gx, gw, gb = ops.conv2d_backward(x, up, w, cfg)
            return {"input": gx, "weights": gw, "bias": gb}

    elif kind == "deconv":
        cfg = LayerConfig("deconv", in_channels=4, out_channels=3, kernel=(4, 4),
                          stride=2, padding=1)
        x = rng.standard_normal((2, 4, 4, 4))
        w = rng.standard_normal((4, 3, 4, 4)) * 0.5
        b = rng.standard_normal(3) * 0.1
        tensors = {"input": x, "weights": w, "bias": b}
        forward = lambda: ops.deconv2d_forward(x, w, b, cfg)

        def backward(up):
            gx, gw, gb = ops.deconv2d_backward(x, up, w, cfg)
            return {"input": gx, "weights": gw, "bias": gb}

    elif kind == "batchnorm":
        cfg = LayerConfig("batchnorm", in_channels=3, out_channels=3)
        x = rng.standard_normal((4, 3, 5, 5))
        g = 1.0 + 0.3 * rng.standard_normal(3)
        b = 0.2 * rng.standard_normal(3)
        tensors = {"input": x, "gamma": g, "beta": b}

        def forward():
            state = ops.BatchNormState.identity(3)
            y, _ = ops.batchnorm_forward(x, g, b, cfg, state, train=True)
            return y

        def backward(up):
            state = ops.BatchNormState.identity(3)
            _, cache = ops.batchnorm_forward(x, g, b, cfg, state, train=True)
            gx, gg, gb = ops.batchnorm_backward(cache, up, g, b)
            return {"input": gx, "gamma": gg, "beta": gb}

    elif kind in ("relu", "leaky_relu", "tanh"):
        slope = 0.2
        x = (_kink_free_normal(rng, (3, 2, 6, 6)) if kind != "tanh"
             else rng.standard_normal((3, 2, 6, 6)))
        tensors = {"input": x}
        forward = lambda: ops.activation_forward(x, kind, slope)
        backward = lambda up: {"input": ops.activation_backward(x, up, kind, slope)}

    elif kind == "channelwise_fc":
        x = rng.standard_normal((2, 3, 4, 4))
        w = rng.standard_normal((3, 16, 16)) * 0.3
        b = rng.standard_normal((3, 16)) * 0.1
        tensors = {"input": x, "weights": w, "bias": b}
        forward = lambda: ops.channelwise_fc_forward(x, w, b)

        def backward(up):
            gx, gw, gb = ops.channelwise_fc_backward(x, up, w)
            return {"input": gx, "weights": gw, "bias": gb}

    else:
        raise ValueError(f"no grad-check case for layer kind {kind!r}")

    return forward, backward, tensors


def check_layer(kind: str, tolerance: float = 1e-4, perturbation: float = 1e-5,
                max_coords: int = 200, seed: int = 0) -> GradCheckReport:
    """Run grad_check on the standard case for one layer kind."""
    forward, backward, tensors = layer_case(kind, seed=seed)
    return grad_check(forward, backward, tensors, tolerance=tolerance,
                      perturbation=perturbation, max_coords=max_coords, seed=seed)
