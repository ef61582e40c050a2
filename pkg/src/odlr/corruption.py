"""Seeded generators for the four corruption tasks.

Each task exposes a one-knob difficulty scale carved into five contiguous
training bins plus a harder test-only bin (level 6). A CorruptionSpec pins
every free choice (parameters and noise/mask seed), so corrupting the same
image with the same spec is bit-reproducible anywhere.

Difficulty bins are closed below and open above; the top bin also includes
its upper endpoint. Deblurring draws both kernel widths independently from
the level interval and bins on max(sigma_x, sigma_y).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError
from .tensor import Tensor4

TASKS = ("inpaint", "interpolate", "deblur", "denoise")
TRAIN_LEVELS = 5
TEST_LEVEL = 6

# Mid-gray in the normalized [-1, 1] domain; used when no training-set mean
# is available.
FILL_FALLBACK = 0.0


@dataclass(frozen=True)
class DifficultyBin:
    task: str
    level: int
    lo: float
    hi: float


def _bins(task: str, edges) -> list[DifficultyBin]:
    return [DifficultyBin(task, i + 1, lo, hi) for i, (lo, hi) in enumerate(edges)]


# Training ranges split into five equal bins; level 6 extends the range by
# one extra bin width for testing generalization.
BIN_TABLE: dict[str, list[DifficultyBin]] = {
    "inpaint": _bins("inpaint", [(1, 6), (7, 12), (13, 18), (19, 24), (25, 30),
                                 (31, 36)]),
    "interpolate": _bins("interpolate", [(0.0, 0.15), (0.15, 0.30), (0.30, 0.45),
                                         (0.45, 0.60), (0.60, 0.75), (0.75, 0.90)]),
    "deblur": _bins("deblur", [(0.0, 1.0), (1.0, 2.0), (2.0, 3.0), (3.0, 4.0),
                               (4.0, 5.0), (5.0, 6.0)]),
    "denoise": _bins("denoise", [(0.0, 20.0), (20.0, 40.0), (40.0, 60.0),
                                 (60.0, 80.0), (80.0, 100.0), (100.0, 120.0)]),
}


def require_task(task: str) -> str:
    if task not in TASKS:
        raise ConfigurationError(f"unknown task {task!r}, expected one of {TASKS}")
    return task


def bin_for(task: str, level: int) -> DifficultyBin:
    require_task(task)
    if not 1 <= level <= TEST_LEVEL:
        raise ConfigurationError(f"level must be 1..{TEST_LEVEL}, got {level}")
    return BIN_TABLE[task][level - 1]


@dataclass(frozen=True)
class CorruptionSpec:
    """A fully-determined corruption instance: task, parameters, seed."""

    task: str
    params: dict
    seed: int

    def __post_init__(self) -> None:
        require_task(self.task)
        p = self.params
        if self.task == "inpaint":
            if p["s"] < 1 or p["x"] < 0 or p["y"] < 0:
                raise ConfigurationError(f"invalid inpaint params {p}")
        elif self.task == "interpolate":
            if not 0.0 <= p["r"] <= 0.9:
                raise ConfigurationError(f"deleted fraction {p['r']} outside [0, 0.9]")
        elif self.task == "deblur":
            if p["sigma_x"] < 0 or p["sigma_y"] < 0:
                raise ConfigurationError(f"negative blur width in {p}")
        elif self.task == "denoise":
            if p["sigma"] < 0:
                raise ConfigurationError(f"negative noise level {p['sigma']}")

    def to_record(self) -> str:
        """Single-line text record; from_record reproduces the spec exactly."""
        return json.dumps({"task": self.task, "params": self.params,
                           "seed": self.seed}, sort_keys=True)

    @classmethod
    def from_record(cls, line: str) -> "CorruptionSpec":
        d = json.loads(line)
        return cls(task=d["task"], params=d["params"], seed=int(d["seed"]))


def sample_spec(task: str, level: int, rng: np.random.Generator,
                img_size: int = 64) -> CorruptionSpec:
    """Draw parameters uniformly from the level's bin; seed from the stream."""
    b = bin_for(task, level)
    if task == "inpaint":
        s = int(rng.integers(int(b.lo), int(b.hi) + 1))
        x = int(rng.integers(0, img_size - s + 1))
        y = int(rng.integers(0, img_size - s + 1))
        params = {"s": s, "x": x, "y": y}
    elif task == "interpolate":
        params = {"r": float(rng.uniform(b.lo, b.hi))}
    elif task == "deblur":
        params = {"sigma_x": float(rng.uniform(b.lo, b.hi)),
                  "sigma_y": float(rng.uniform(b.lo, b.hi))}
    else:
        params = {"sigma": float(rng.uniform(b.lo, b.hi))}
    seed = int(rng.integers(0, 2 ** 63))
    return CorruptionSpec(task=task, params=params, seed=seed)


def make_fixated_spec(task: str, value: float, rng: np.random.Generator,
                      img_size: int = 64) -> CorruptionSpec:
    """Spec at one exact difficulty setting (the fixated-model regimes).

    Inpainting fixes a centered block of side ``value``; deblurring sets
    both kernel widths to ``value``.
    """
    require_task(task)
    if task == "inpaint":
        s = int(value)
        off = (img_size - s) // 2
        params = {"s": s, "x": off, "y": off}
    elif task == "interpolate":
        params = {"r": float(value)}
    elif task == "deblur":
        params = {"sigma_x": float(value), "sigma_y": float(value)}
    else:
        params = {"sigma": float(value)}
    seed = int(rng.integers(0, 2 ** 63))
    return CorruptionSpec(task=task, params=params, seed=seed)


def difficulty_scalar(spec: CorruptionSpec) -> float:
    if spec.task == "inpaint":
        return float(spec.params["s"])
    if spec.task == "interpolate":
        return float(spec.params["r"])
    if spec.task == "deblur":
        return max(float(spec.params["sigma_x"]), float(spec.params["sigma_y"]))
    return float(spec.params["sigma"])


def level_of_scalar(task: str, v: float) -> int:
    """Bin lookup: closed below, open above; the top bin keeps its endpoint."""
    bins = BIN_TABLE[require_task(task)]
    for b in bins[:-1]:
        next_lo = bins[b.level].lo
        if b.lo <= v < next_lo:
            return b.level
    top = bins[-1]
    if top.lo <= v <= top.hi:
        return top.level
    raise ConfigurationError(
        f"{task} parameter {v} outside the binned range [{bins[0].lo}, {top.hi}]"
    )


def level_of(spec: CorruptionSpec) -> int:
    """The unique difficulty bin containing the spec's binning scalar."""
    return level_of_scalar(spec.task, difficulty_scalar(spec))


# ---------------------------------------------------------------------------
# corruption operators
# ---------------------------------------------------------------------------

def _fill_vector(fill, channels: int, dtype) -> np.ndarray:
    if fill is None:
        fill = FILL_FALLBACK
    arr = np.asarray(fill, dtype=dtype)
    if arr.ndim == 0:
        arr = np.full(channels, float(arr), dtype=dtype)
    if arr.shape != (channels,):
        raise ConfigurationError(
            f"fill must be a scalar or per-channel vector of length {channels}"
        )
    return arr


def corrupt_inpaint(img: Tensor4, spec: CorruptionSpec, fill=None) -> Tensor4:
    """Replace the s x s block at (x, y) with the fill value; rest untouched."""
    n, c, h, w = img.shape
    s, x, y = spec.params["s"], spec.params["x"], spec.params["y"]
    if x + s > w or y + s > h:
        raise ConfigurationError(
            f"inpaint block (s={s} at x={x}, y={y}) extends outside {h}x{w} image"
        )
    out = img.copy()
    out[:, :, y:y + s, x:x + s] = _fill_vector(fill, c, img.dtype).reshape(1, c, 1, 1)
    return out


def corrupt_interpolate(img: Tensor4, spec: CorruptionSpec, fill=None) -> Tensor4:
    """Delete round(r*h*w) pixel positions, chosen by the spec seed."""
    n, c, h, w = img.shape
    r = spec.params["r"]
    k = int(np.floor(r * h * w + 0.5))
    out = img.copy()
    if k == 0:
        return out
    rng = np.random.Generator(np.random.Philox(spec.seed))
    positions = rng.choice(h * w, size=k, replace=False)
    flat = out.reshape(n, c, h * w)
    flat[:, :, positions] = _fill_vector(fill, c, img.dtype).reshape(1, c, 1)
    return out


def gaussian_kernel_1d(sigma: float) -> np.ndarray:
    """Unit-sum Gaussian taps at integer offsets, truncated at ceil(3*sigma)."""
    if sigma <= 0:
        return np.array([1.0])
    radius = int(np.ceil(3.0 * sigma))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (offsets / sigma) ** 2)
    return k / k.sum()


def gaussian_kernel(sigma_x: float, sigma_y: float) -> np.ndarray:
    """Separable 2-D kernel (rows = vertical axis), renormalized to sum 1."""
    ky = gaussian_kernel_1d(sigma_y)
    kx = gaussian_kernel_1d(sigma_x)
    k2 = np.outer(ky, kx)
    return k2 / k2.sum()


def corrupt_blur(img: Tensor4, spec: CorruptionSpec) -> Tensor4:
    """Per-channel Gaussian smoothing with reflect border handling."""
    sx, sy = spec.params["sigma_x"], spec.params["sigma_y"]
    if sx == 0 and sy == 0:
        return img.copy()
    out = np.asarray(img, dtype=np.float64)
    out = ndimage.correlate1d(out, gaussian_kernel_1d(sy), axis=2, mode="reflect")
    out = ndimage.correlate1d(out, gaussian_kernel_1d(sx), axis=3, mode="reflect")
    return out.astype(img.dtype, copy=False)


def corrupt_noise(img: Tensor4, spec: CorruptionSpec) -> Tensor4:
    """Additive white Gaussian noise, sigma in 8-bit units, no clipping.

    The image lives in [-1, 1], a 2-unit range covering 255 intensity
    steps, so the normalized standard deviation is sigma / 127.5.
    """
    sigma = spec.params["sigma"]
    if sigma == 0:
        return img.copy()
    rng = np.random.Generator(np.random.Philox(spec.seed))
    noise = rng.normal(0.0, sigma / 127.5, size=img.shape)
    return img + noise.astype(img.dtype, copy=False)


def corrupt(img: Tensor4, spec: CorruptionSpec, fill=None) -> Tensor4:
    """Apply the spec's corruption; pure function of (image, spec, fill)."""
    if spec.task == "inpaint":
        return corrupt_inpaint(img, spec, fill)
    if spec.task == "interpolate":
        return corrupt_interpolate(img, spec, fill)
    if spec.task == "deblur":
        return corrupt_blur(img, spec)
    return corrupt_noise(img, spec)
