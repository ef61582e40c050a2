"""The training loop and evaluation protocols.

Each epoch makes one shuffled pass over the training images, corrupting
every batch slot at the difficulty level the current allocation assigns,
then validates the snapshot on all sub-tasks and asks the scheduler for the
next allocation. All scheduler kinds consume exactly the same number of
training instances per epoch, so comparisons are equal-budget by
construction.

Corruption randomness is keyed per (seed, epoch, batch, slot) and
validation randomness per (seed, epoch, level, image), making every metric
bit-reproducible from the config alone.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .corruption import (
    TRAIN_LEVELS,
    corrupt,
    level_of_scalar,
    make_fixated_spec,
    require_task,
    sample_spec,
)
from .dataset import mean_fill, stack
from .errors import ConfigurationError, DataError, NumericError
from .metrics import PSNR_CAP_DB, l2_permille_per_image, psnr_per_image
from .network import NetworkConfig, build_network, train_step
from .optim import OptimizerConfig
from .rng import derive_rng, derive_seed
from .schedulers import SchedulerKind, SchedulerState, allocate, select_hard


@dataclass
class TrainConfig:
    """Everything a training run depends on; seeds derive from ``seed``."""

    task: str
    scheduler: SchedulerKind
    n_subtasks: int = TRAIN_LEVELS
    batch_size: int = 100
    epochs: int = 150
    batches_per_epoch: int | None = None  # default: train size // batch size
    seed: int = 0
    encoder_channels: tuple[int, ...] = (64, 128, 256, 512)
    input_size: int = 64
    precision: str = "float64"
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    stage_length: int | None = None  # default: ceil(epochs / n_subtasks)
    checkpoint_every: int = 0  # epochs between snapshots; 0 = final only
    hard_warmup_epochs: int = 50
    hard_select_k: int = 10
    hard_pool_size: int | None = None  # default: training-set size
    val_corruption: str = "per_epoch"  # or "fixed": frozen validation seeds
    psnr_cap: float = PSNR_CAP_DB

    def __post_init__(self) -> None:
        require_task(self.task)
        if self.batch_size < self.n_subtasks:
            raise ConfigurationError(
                f"batch size {self.batch_size} must be >= {self.n_subtasks} sub-tasks"
            )
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.val_corruption not in ("per_epoch", "fixed"):
            raise ConfigurationError(
                f"val_corruption must be per_epoch or fixed, got {self.val_corruption}"
            )
        self.encoder_channels = tuple(int(c) for c in self.encoder_channels)
        # a fixated parameter value implies its difficulty bin for reporting
        k = self.scheduler
        if k.name == "fixated" and k.fixated_level is None:
            self.scheduler = replace(
                k, fixated_level=level_of_scalar(self.task, k.fixated_value))

    # -- derived pieces ----------------------------------------------------
    @property
    def channels(self) -> int:
        return 1 if self.task == "denoise" else 3

    @property
    def init_seed(self) -> int:
        return derive_seed(self.seed, "init")

    @property
    def data_seed(self) -> int:
        return derive_seed(self.seed, "data")

    @property
    def corruption_seed(self) -> int:
        return derive_seed(self.seed, "corruption")

    @property
    def val_seed(self) -> int:
        return derive_seed(self.seed, "validation")

    @property
    def resolved_stage_length(self) -> int:
        if self.stage_length is not None:
            return self.stage_length
        return max(1, math.ceil(self.epochs / self.n_subtasks))

    def network_config(self) -> NetworkConfig:
        return NetworkConfig(
            input_channels=self.channels,
            input_size=self.input_size,
            encoder_channels=self.encoder_channels,
            latent_spatial=self.input_size // (2 ** len(self.encoder_channels)),
            seed=self.init_seed,
            dtype=self.precision,
            task=self.task,
        )


@dataclass
class EpochReport:
    """Audit record for one epoch of Algorithm-style training."""

    epoch: int
    train_loss: float
    psnr: tuple[float, ...]             # per-sub-task validation PSNR (dB)
    allocation: tuple[int, ...]         # slots used this epoch
    next_allocation: tuple[int, ...]    # slots the scheduler chose for the next
    wall_time_s: float


@dataclass
class TestReport:
    """Per-level, per-trial metrics plus cross-trial aggregates."""

    task: str
    levels: tuple[int, ...]
    trials: int
    psnr: np.ndarray      # (trials, len(levels))
    l2pm: np.ndarray      # (trials, len(levels))

    @property
    def psnr_mean(self) -> np.ndarray:
        return self.psnr.mean(axis=0)

    @property
    def l2pm_mean(self) -> np.ndarray:
        return self.l2pm.mean(axis=0)

    def _se(self, arr: np.ndarray) -> np.ndarray:
        if self.trials < 2:
            return np.zeros(arr.shape[1])
        return arr.std(axis=0, ddof=1) / math.sqrt(self.trials)

    @property
    def psnr_se(self) -> np.ndarray:
        return self._se(self.psnr)

    @property
    def l2pm_se(self) -> np.ndarray:
        return self._se(self.l2pm)

    def summary(self, train_levels: int = TRAIN_LEVELS) -> tuple[float, float]:
        """(mean L2 permille, mean PSNR) averaged over levels 1..train_levels."""
        keep = [i for i, lv in enumerate(self.levels) if lv <= train_levels]
        return (float(self.l2pm_mean[keep].mean()),
                float(self.psnr_mean[keep].mean()))


def _as_stack(images) -> np.ndarray:
    if isinstance(images, np.ndarray):
        return images
    return stack(images)


def _forward_chunks(net, batch: np.ndarray, chunk: int) -> np.ndarray:
    outs = [net.forward(batch[i:i + chunk], train=False)
            for i in range(0, batch.shape[0], chunk)]
    return np.concatenate(outs, axis=0)


def validate_subtasks(net, val_images, task: str, n_subtasks: int = TRAIN_LEVELS,
                      epoch_seed: int = 0, fill=None, batch_size: int = 100,
                      cap: float = PSNR_CAP_DB, img_size: int = 64) -> np.ndarray:
    """Mean restoration PSNR per difficulty level on the validation set.

    Image i at level L is corrupted by the stream keyed (epoch_seed, L, i),
    so the result is independent of loop order and comparable across
    epochs up to model change only.
    """
    clean = _as_stack(val_images)
    if clean.shape[0] == 0:
        raise DataError("empty validation set")
    m = clean.shape[0]
    scores = []
    for level in range(1, n_subtasks + 1):
        corrupted = np.empty_like(clean)
        for i in range(m):
            rng = derive_rng(epoch_seed, level, i)
            spec = sample_spec(task, level, rng, img_size)
            corrupted[i] = corrupt(clean[i:i + 1], spec, fill)[0]
        restored = _forward_chunks(net, corrupted, batch_size)
        scores.append(float(psnr_per_image(restored, clean, cap).mean()))
    return np.array(scores)


def _expand_allocation(allocation) -> list[int]:
    return [level for level, count in enumerate(allocation, start=1)
            for _ in range(count)]


def _corrupt_slot(clean_img: np.ndarray, task: str, level: int,
                  kind: SchedulerKind, rng, fill, img_size: int) -> np.ndarray:
    if kind.name == "fixated" and kind.fixated_value is not None:
        spec = make_fixated_spec(task, kind.fixated_value, rng, img_size)
    else:
        spec = sample_spec(task, level, rng, img_size)
    return corrupt(clean_img[None], spec, fill)[0]


def _build_hard_pool(config: TrainConfig, clean: np.ndarray, fill):
    """Static pre-corrupted pool the hard-mining baseline trains from."""
    size = config.hard_pool_size or clean.shape[0]
    pool_c = np.empty((size,) + clean.shape[1:], dtype=clean.dtype)
    pool_t = np.empty_like(pool_c)
    for i in range(size):
        rng = derive_rng(config.corruption_seed, "hard-pool", i)
        level = int(rng.integers(1, config.n_subtasks + 1))
        spec = sample_spec(config.task, level, rng, config.input_size)
        src = clean[i % clean.shape[0]]
        pool_t[i] = src
        pool_c[i] = corrupt(src[None], spec, fill)[0]
    return pool_c, pool_t


def train(config: TrainConfig, train_set, val_set, checkpoint_dir=None,
          validate_fn=None, progress=None, resume_state=None):
    """Run the full schedule; returns (net, per-epoch reports).

    ``validate_fn(net, epoch) -> sequence of N PSNRs`` may replace the
    built-in validation (used by tests and dry runs). Checkpoints are
    written to ``checkpoint_dir`` every ``checkpoint_every`` epochs and at
    the end; on a non-finite loss the run aborts with the last snapshot
    intact. ``resume_state = (net, start_epoch, last_psnr)`` continues an
    interrupted run; because all randomness is keyed per epoch, a resumed
    run reproduces the uninterrupted one exactly.
    """
    from .checkpoint import save_checkpoint  # local import: avoids cycle

    clean = _as_stack(train_set)
    if clean.shape[1] != config.channels:
        raise ConfigurationError(
            f"training images have {clean.shape[1]} channels, task "
            f"{config.task!r} expects {config.channels}"
        )
    fill = None
    if config.task in ("inpaint", "interpolate"):
        fill = mean_fill(train_set) if not isinstance(train_set, np.ndarray) \
            else clean.mean(axis=(0, 2, 3))

    B, N = config.batch_size, config.n_subtasks
    if resume_state is None:
        net = build_network(config.network_config())
        start_epoch = 0
        last_psnr = None
    else:
        net, start_epoch, last_psnr = resume_state
        if start_epoch > 0 and last_psnr is None:
            raise ConfigurationError("resume_state needs the last PSNR vector")
    net.train()

    hard = config.scheduler.name == "hard_mining"
    if hard:
        pool_c, pool_t = _build_hard_pool(config, clean, fill)
        epoch_domain = pool_c.shape[0]
    else:
        epoch_domain = clean.shape[0]

    bpe = config.batches_per_epoch or epoch_domain // B
    if bpe < 1:
        raise DataError(
            f"{epoch_domain} images cannot fill one batch of {B}; "
            f"reduce batch size or add data"
        )

    if validate_fn is None:
        def validate_fn(net_, epoch_):
            if config.val_corruption == "per_epoch":
                es = derive_seed(config.val_seed, epoch_)
            else:
                es = derive_seed(config.val_seed, 0)
            return validate_subtasks(net_, val_set, config.task, N, es, fill,
                                     config.batch_size, config.psnr_cap,
                                     config.input_size)

    state = SchedulerState(config.scheduler, epoch=start_epoch,
                           last_psnr=last_psnr,
                           stage_length=config.resolved_stage_length)
    allocation = allocate(state, B, N)
    reports: list[EpochReport] = []

    def snapshot(tag):
        if checkpoint_dir is not None:
            from pathlib import Path
            path = Path(checkpoint_dir)
            path.mkdir(parents=True, exist_ok=True)
            save_checkpoint(net, path / f"checkpoint_{tag}.odlr")

    for epoch in range(start_epoch, config.epochs):
        t0 = time.perf_counter()
        order = derive_rng(config.data_seed, epoch).permutation(epoch_domain)
        batch_losses = []
        for b in range(bpe):
            idxs = order[b * B:(b + 1) * B]
            try:
                if hard:
                    cb, tb = pool_c[idxs], pool_t[idxs]
                    if epoch < config.hard_warmup_epochs:
                        loss = train_step(net, cb, tb, config.optimizer)
                    else:
                        out = _forward_chunks(net, cb, B)
                        per_sample = np.mean((out - tb) ** 2, axis=(1, 2, 3))
                        sel = select_hard(per_sample, config.hard_select_k)
                        train_step(net, cb[sel], tb[sel], config.optimizer)
                        loss = float(per_sample.mean())
                else:
                    levels = _expand_allocation(allocation)
                    tb = clean[idxs]
                    cb = np.empty_like(tb)
                    for slot in range(B):
                        rng = derive_rng(config.corruption_seed, epoch, b, slot)
                        cb[slot] = _corrupt_slot(tb[slot], config.task,
                                                 levels[slot], config.scheduler,
                                                 rng, fill, config.input_size)
                    loss = train_step(net, cb, tb, config.optimizer)
            except NumericError as exc:
                raise NumericError(
                    f"epoch {epoch} batch {b}: {exc}; last checkpoint retained"
                ) from exc
            batch_losses.append(loss)

        psnrs = tuple(float(v) for v in validate_fn(net, epoch))
        if len(psnrs) != N:
            raise ConfigurationError(
                f"validation returned {len(psnrs)} PSNRs, expected {N}"
            )
        state = SchedulerState(config.scheduler, epoch=epoch + 1,
                               last_psnr=list(psnrs),
                               stage_length=config.resolved_stage_length)
        next_allocation = allocate(state, B, N)
        report = EpochReport(
            epoch=epoch,
            train_loss=float(np.mean(batch_losses)),
            psnr=psnrs,
            allocation=tuple(allocation),
            next_allocation=tuple(next_allocation),
            wall_time_s=time.perf_counter() - t0,
        )
        reports.append(report)
        if progress is not None:
            progress(report)
        if config.checkpoint_every and (epoch + 1) % config.checkpoint_every == 0:
            snapshot(f"epoch_{epoch:05d}")
        allocation = next_allocation

    snapshot("final")
    return net, reports


def evaluate_test(net, test_set, task: str, trials: int = 20,
                  levels=tuple(range(1, TRAIN_LEVELS + 2)), master_seed: int = 0,
                  fill=None, batch_size: int = 100, cap: float = PSNR_CAP_DB,
                  img_size: int = 64) -> TestReport:
    """The multi-trial test protocol: fresh corruptions per trial and level."""
    clean = _as_stack(test_set)
    if clean.shape[0] == 0:
        raise DataError("empty test set")
    levels = tuple(int(v) for v in levels)
    m = clean.shape[0]
    psnr_arr = np.empty((trials, len(levels)))
    l2_arr = np.empty((trials, len(levels)))
    for t in range(trials):
        for li, level in enumerate(levels):
            corrupted = np.empty_like(clean)
            for i in range(m):
                rng = derive_rng(master_seed, "test", t, level, i)
                spec = sample_spec(task, level, rng, img_size)
                corrupted[i] = corrupt(clean[i:i + 1], spec, fill)[0]
            restored = _forward_chunks(net, corrupted, batch_size)
            psnr_arr[t, li] = psnr_per_image(restored, clean, cap).mean()
            l2_arr[t, li] = l2_permille_per_image(restored, clean).mean()
    return TestReport(task=task, levels=levels, trials=trials,
                      psnr=psnr_arr, l2pm=l2_arr)


def tile_restore(net, image: np.ndarray, stride: int = 3,
                 chunk: int = 64) -> np.ndarray:
    """Restore an arbitrary-size image by averaging overlapping patches.

    Windows start at 0, stride, 2*stride, ... plus a final window flush with
    each border; every output pixel is the arithmetic mean (computed as a
    running mean, so identical patch outputs average to themselves exactly)
    of all patch restorations covering it.
    """
    if image.ndim != 4 or image.shape[0] != 1:
        raise ConfigurationError(f"tile_restore takes a (1, c, H, W) image, "
                                 f"got {image.shape}")
    size = net.input_size
    _, c, h, w = image.shape
    if h < size or w < size:
        raise ConfigurationError(
            f"image {h}x{w} smaller than the network input {size}x{size}; "
            f"upscale the image first"
        )

    def origins(extent: int) -> list[int]:
        out = list(range(0, extent - size + 1, stride))
        if out[-1] != extent - size:
            out.append(extent - size)
        return out

    oys, oxs = origins(h), origins(w)
    windows = [(oy, ox) for oy in oys for ox in oxs]
    mean = np.zeros((c, h, w), dtype=np.float64)
    count = np.zeros((h, w), dtype=np.float64)
    for start in range(0, len(windows), chunk):
        group = windows[start:start + chunk]
        patches = np.stack([image[0, :, oy:oy + size, ox:ox + size]
                            for oy, ox in group])
        restored = net.forward(patches, train=False)
        for k, (oy, ox) in enumerate(group):
            ys, xs = slice(oy, oy + size), slice(ox, ox + size)
            count[ys, xs] += 1.0
            mean[:, ys, xs] += (restored[k] - mean[:, ys, xs]) / count[ys, xs]
    return mean[None].astype(image.dtype, copy=False)
