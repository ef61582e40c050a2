"""Image ingestion, splitting, and normalization round-trips.

Every experiment starts from a directory of PNG/PPM/PGM images. Ingestion
center-crops to square, bilinearly resizes to the working resolution,
optionally converts to grayscale with Rec. 601 luma weights, and maps
[0, 255] linearly onto [-1, 1]. Records are ordered by relative path so the
same directory always produces the same dataset.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ConfigurationError, DataError
from .tensor import Tensor4

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".ppm", ".pgm", ".pbm", ".jpg", ".jpeg", ".bmp")

REC601 = np.array([0.299, 0.587, 0.114])


@dataclass
class ImageRecord:
    id: str                 # stable key: path relative to the ingest root
    pixels: Tensor4         # (1, C, size, size) in [-1, 1]
    origin: tuple[int, int]  # source (height, width)


@dataclass
class DatasetSplit:
    train: list[str]
    val: list[str]
    test: list[str]
    split_seed: int

    def resolve(self, records: list[ImageRecord]):
        by_id = {r.id: r for r in records}
        return ([by_id[i] for i in self.train],
                [by_id[i] for i in self.val],
                [by_id[i] for i in self.test])


def _bilinear_resize_axis(img: np.ndarray, new_len: int, axis: int) -> np.ndarray:
    """Sample at pixel centers: src = (dst + 0.5) * scale - 0.5, edges clamped."""
    old_len = img.shape[axis]
    if old_len == new_len:
        return img
    scale = old_len / new_len
    src = (np.arange(new_len) + 0.5) * scale - 0.5
    i0 = np.clip(np.floor(src).astype(int), 0, old_len - 1)
    i1 = np.clip(i0 + 1, 0, old_len - 1)
    frac = np.clip(src - i0, 0.0, 1.0)
    a = np.take(img, i0, axis=axis)
    b = np.take(img, i1, axis=axis)
    shape = [1] * img.ndim
    shape[axis] = new_len
    f = frac.reshape(shape)
    return a * (1.0 - f) + b * f


def bilinear_resize(img: np.ndarray, size: int) -> np.ndarray:
    """(h, w, c) float image resized to (size, size, c)."""
    out = _bilinear_resize_axis(img, size, axis=0)
    return _bilinear_resize_axis(out, size, axis=1)


def center_crop_square(img: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    side = min(h, w)
    top = (h - side) // 2
    left = (w - side) // 2
    return img[top:top + side, left:left + side]


def _decode(path: Path) -> np.ndarray | None:
    try:
        with Image.open(path) as im:
            im = im.convert("RGB")
            return np.asarray(im, dtype=np.float64)
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        log.warning("skipping undecodable image %s: %s", path, exc)
        return None


def ingest(directory, channels: int = 3, target: int = 64) -> list[ImageRecord]:
    """Load every decodable image under ``directory`` into normalized records."""
    if channels not in (1, 3):
        raise ConfigurationError(f"channels must be 1 or 3, got {channels}")
    root = Path(directory)
    if not root.is_dir():
        raise DataError(f"{root} is not a directory")
    paths = sorted(p for p in root.rglob("*")
                   if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
    records = []
    for path in paths:
        raw = _decode(path)
        if raw is None:
            continue
        origin = (raw.shape[0], raw.shape[1])
        img = bilinear_resize(center_crop_square(raw), target)
        if channels == 1:
            img = img @ REC601
            img = img[:, :, None]
        pixels = img.transpose(2, 0, 1)[None] / 127.5 - 1.0
        records.append(ImageRecord(id=str(path.relative_to(root)),
                                   pixels=pixels, origin=origin))
    if not records:
        raise DataError(f"no decodable images found under {root}")
    return records


def split(records: list[ImageRecord], sizes: tuple[int, int, int],
          split_seed: int) -> DatasetSplit:
    """Deterministic shuffle then partition into train/val/test id lists."""
    n_train, n_val, n_test = sizes
    total = n_train + n_val + n_test
    if total > len(records):
        raise DataError(
            f"split sizes {sizes} need {total} records, only {len(records)} available"
        )
    perm = np.random.default_rng(split_seed).permutation(len(records))
    ids = [records[i].id for i in perm]
    return DatasetSplit(train=ids[:n_train],
                        val=ids[n_train:n_train + n_val],
                        test=ids[n_train + n_val:total],
                        split_seed=split_seed)


def mean_fill(train_records: list[ImageRecord]) -> np.ndarray:
    """Per-channel mean over all pixels of all training images (normalized units)."""
    if not train_records:
        raise DataError("mean_fill needs a non-empty training split")
    acc = np.zeros(train_records[0].pixels.shape[1], dtype=np.float64)
    count = 0
    for rec in train_records:
        acc += rec.pixels.sum(axis=(0, 2, 3))
        count += rec.pixels.shape[0] * rec.pixels.shape[2] * rec.pixels.shape[3]
    return acc / count


def stack(records: list[ImageRecord]) -> np.ndarray:
    """(m, c, h, w) array of all record pixels, in record order."""
    if not records:
        raise DataError("empty record list")
    return np.concatenate([r.pixels for r in records], axis=0)


def dataset_digest(records: list[ImageRecord]) -> str:
    """SHA-256 over ids and pixel bytes; identifies the ingested data."""
    h = hashlib.sha256()
    for rec in records:
        h.update(rec.id.encode("utf-8"))
        h.update(np.ascontiguousarray(rec.pixels, dtype="<f8").tobytes())
    return h.hexdigest()


def denormalize(t: np.ndarray) -> np.ndarray:
    """Map [-1, 1] to 8-bit with round-half-up; clamps out-of-range values."""
    clipped = np.clip(t, -1.0, 1.0)
    return np.floor((clipped + 1.0) * 127.5 + 0.5).astype(np.uint8)


def normalize(img8: np.ndarray) -> np.ndarray:
    """Inverse of denormalize on the 8-bit grid."""
    return np.asarray(img8, dtype=np.float64) / 127.5 - 1.0


def write_image(path, img8: np.ndarray) -> None:
    """Write a (c, h, w) or (1, c, h, w) uint8 image as PNG (or by suffix)."""
    arr = np.asarray(img8)
    if arr.ndim == 4:
        if arr.shape[0] != 1:
            raise ConfigurationError("write_image takes a single image")
        arr = arr[0]
    if arr.ndim != 3 or arr.shape[0] not in (1, 3):
        raise ConfigurationError(f"expected (c, h, w) with c in {{1, 3}}, got {arr.shape}")
    if arr.shape[0] == 1:
        im = Image.fromarray(arr[0].astype(np.uint8), mode="L")
    else:
        im = Image.fromarray(arr.transpose(1, 2, 0).astype(np.uint8), mode="RGB")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        im.save(path)
    except OSError as exc:
        raise DataError(f"cannot write image to {path}: {exc}") from exc


def read_image_normalized(path, channels: int) -> np.ndarray:
    """Load one image without resizing: (1, c, h, w) in [-1, 1]."""
    raw = _decode(Path(path))
    if raw is None:
        raise DataError(f"cannot decode image {path}")
    if channels == 1:
        raw = (raw @ REC601)[:, :, None]
    return raw.transpose(2, 0, 1)[None] / 127.5 - 1.0
