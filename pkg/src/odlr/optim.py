"""Bias-corrected ADAM, applied in place to a list of Parameters."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError
from .tensor import Parameter


@dataclass(frozen=True)
class OptimizerConfig:
    """Solver hyper-parameters; defaults follow the DCGAN convention."""

    lr: float = 0.0002
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params: list[Parameter], lr: float = 0.0002, beta1: float = 0.5,
              beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One ADAM update on every parameter; zeroes gradients afterwards.

    m_t = b1*m + (1-b1)*g ; v_t = b2*v + (1-b2)*g^2
    value -= lr * (m_t / (1-b1^t)) / (sqrt(v_t / (1-b2^t)) + eps)
    """
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise NumericError(
                f"non-finite gradient in parameter {p.name or '<unnamed>'}"
            )
        t = p.step_count + 1
        g = p.grad
        p.adam_m *= beta1
        p.adam_m += (1.0 - beta1) * g
        p.adam_v *= beta2
        p.adam_v += (1.0 - beta2) * (g * g)
        m_hat = p.adam_m / (1.0 - beta1 ** t)
        v_hat = p.adam_v / (1.0 - beta2 ** t)
        p.value -= lr * m_hat / (np.sqrt(v_hat) + eps)
        p.step_count = t
        p.zero_grad()
