"""Synthetic image generator for desk-scale experiments and fixtures.

Produces smooth, structured 64x64 images (gradient background, a few soft
ellipses and bars, light smoothing) with enough regularity for a small
restoration network to learn from, without any external dataset.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .corruption import gaussian_kernel_1d
from .dataset import ImageRecord, denormalize, write_image
from .rng import derive_rng


def _gradient(rng, size: int) -> np.ndarray:
    yy, xx = np.meshgrid(np.linspace(-1, 1, size), np.linspace(-1, 1, size),
                         indexing="ij")
    theta = rng.uniform(0, 2 * np.pi)
    slope = rng.uniform(0.2, 0.9)
    offset = rng.uniform(-0.4, 0.4)
    return offset + slope * (np.cos(theta) * xx + np.sin(theta) * yy)


def _ellipse_mask(rng, size: int) -> np.ndarray:
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    cy, cx = rng.uniform(8, size - 8, size=2)
    ry, rx = rng.uniform(4, size / 3, size=2)
    theta = rng.uniform(0, np.pi)
    dy, dx = yy - cy, xx - cx
    u = np.cos(theta) * dx + np.sin(theta) * dy
    v = -np.sin(theta) * dx + np.cos(theta) * dy
    return ((u / rx) ** 2 + (v / ry) ** 2) <= 1.0


def _bar_mask(rng, size: int) -> np.ndarray:
    mask = np.zeros((size, size), dtype=bool)
    if rng.uniform() < 0.5:
        a, b = sorted(rng.integers(0, size, size=2))
        mask[a:b + 1, :] = True
    else:
        a, b = sorted(rng.integers(0, size, size=2))
        mask[:, a:b + 1] = True
    return mask


def synth_image(rng: np.random.Generator, size: int = 64,
                channels: int = 1) -> np.ndarray:
    """One (1, c, size, size) image in [-1, 1]."""
    base = _gradient(rng, size)
    for _ in range(int(rng.integers(2, 6))):
        mask = _ellipse_mask(rng, size) if rng.uniform() < 0.7 else _bar_mask(rng, size)
        base = np.where(mask, rng.uniform(-0.9, 0.9), base)
    k = gaussian_kernel_1d(float(rng.uniform(0.5, 1.2)))
    base = ndimage.correlate1d(base, k, axis=0, mode="reflect")
    base = ndimage.correlate1d(base, k, axis=1, mode="reflect")
    if channels == 1:
        img = base[None]
    else:
        tints = rng.uniform(0.7, 1.0, size=3)
        shifts = rng.uniform(-0.15, 0.15, size=3)
        img = np.stack([base * t + s for t, s in zip(tints, shifts)])
    return np.clip(img, -1.0, 1.0)[None]


def synth_records(count: int, channels: int = 1, size: int = 64,
                  seed: int = 0) -> list[ImageRecord]:
    records = []
    for i in range(count):
        rng = derive_rng("synth", seed, i)
        records.append(ImageRecord(
            id=f"synth_{i:06d}",
            pixels=synth_image(rng, size, channels),
            origin=(size, size),
        ))
    return records


def write_synth_dataset(directory, count: int, channels: int = 1,
                        size: int = 64, seed: int = 0) -> None:
    """Write the synthetic set as PNGs so the CLI can ingest it."""
    for rec in synth_records(count, channels, size, seed):
        write_image(f"{directory}/{rec.id}.png", denormalize(rec.pixels))
