"""Restoration quality metrics.

Both metrics compare images on the [0, 1] intensity scale: inputs in the
normalized [-1, 1] domain are mapped by u = (x + 1) / 2 first. PSNR is
10*log10(1/MSE), capped (default 100 dB) so a zero-error restoration still
yields a finite mean over a validation set.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError

PSNR_CAP_DB = 100.0


def _mse01(restored: np.ndarray, reference: np.ndarray, axes=None) -> np.ndarray:
    if restored.shape != reference.shape:
        raise ConfigurationError(
            f"metric inputs differ in shape: {restored.shape} vs {reference.shape}"
        )
    diff = (np.asarray(restored, dtype=np.float64) - np.asarray(reference, dtype=np.float64)) / 2.0
    return np.mean(diff * diff, axis=axes)


def psnr(restored: np.ndarray, reference: np.ndarray, cap: float = PSNR_CAP_DB) -> float:
    """Peak signal-to-noise ratio in dB on the [0,1] scale."""
    mse = float(_mse01(restored, reference))
    if mse == 0.0:
        return cap
    return min(10.0 * np.log10(1.0 / mse), cap)


def l2_permille(restored: np.ndarray, reference: np.ndarray) -> float:
    """Mean per-pixel squared error on the [0,1] scale, in permille."""
    return 1000.0 * float(_mse01(restored, reference))


def psnr_per_image(restored: np.ndarray, reference: np.ndarray,
                   cap: float = PSNR_CAP_DB) -> np.ndarray:
    """PSNR of each sample in a (n, c, h, w) batch."""
    mse = _mse01(restored, reference, axes=(1, 2, 3))
    out = np.full(mse.shape, cap)
    nz = mse > 0
    out[nz] = np.minimum(10.0 * np.log10(1.0 / mse[nz]), cap)
    return out


def l2_permille_per_image(restored: np.ndarray, reference: np.ndarray) -> np.ndarray:
    return 1000.0 * _mse01(restored, reference, axes=(1, 2, 3))
