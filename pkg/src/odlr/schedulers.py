"""Batch allocation across difficulty sub-tasks.

The demand-driven rule assigns next-epoch batch slots inversely
proportionally to each sub-task's mean validation PSNR; every baseline
regime (rigid joint, staged/cumulative curricula and their reversals,
hard mining, fixated) answers the same ``allocate`` call so the training
loop is scheduler-agnostic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigurationError

KIND_NAMES = (
    "on_demand",
    "rigid_joint",
    "staged_curriculum",
    "staged_anti",
    "cumulative_curriculum",
    "cumulative_anti",
    "hard_mining",
    "fixated",
)

AllocationVector = list  # N non-negative ints summing to the batch size


@dataclass(frozen=True)
class SchedulerKind:
    """A scheduler regime; fixated carries its level or exact parameter."""

    name: str
    fixated_level: int | None = None
    fixated_value: float | None = None

    def __post_init__(self) -> None:
        if self.name not in KIND_NAMES:
            raise ConfigurationError(
                f"unknown scheduler {self.name!r}, expected one of {KIND_NAMES}"
            )
        if self.name == "fixated":
            if self.fixated_level is None and self.fixated_value is None:
                raise ConfigurationError(
                    "fixated scheduler needs a level or an exact parameter value"
                )
        elif self.fixated_level is not None or self.fixated_value is not None:
            raise ConfigurationError(f"{self.name} takes no fixated arguments")

    @classmethod
    def parse(cls, text: str) -> "SchedulerKind":
        """Parse CLI spellings: 'on-demand', 'fixated:sigma=10', 'fixated:level=2'."""
        text = text.strip()
        if text.startswith("fixated"):
            _, _, arg = text.partition(":")
            if not arg:
                raise ConfigurationError(
                    "fixated scheduler needs an argument, e.g. fixated:level=3 "
                    "or fixated:sigma=10"
                )
            key, _, value = arg.partition("=")
            if not value:
                raise ConfigurationError(f"cannot parse fixated argument {arg!r}")
            key = key.strip()
            if key == "level":
                return cls("fixated", fixated_level=int(value))
            if key in ("sigma", "s", "r", "value"):
                return cls("fixated", fixated_value=float(value))
            raise ConfigurationError(f"unknown fixated key {key!r}")
        name = text.replace("-", "_")
        return cls(name)

    def label(self) -> str:
        if self.name == "fixated":
            if self.fixated_level is not None:
                return f"fixated:level={self.fixated_level}"
            return f"fixated:value={self.fixated_value:g}"
        return self.name.replace("_", "-")


@dataclass
class SchedulerState:
    """What a scheduler needs to answer "next epoch's allocation"."""

    kind: SchedulerKind
    epoch: int = 0
    last_psnr: list | None = None  # mean validation PSNR per sub-task
    stage_length: int = 300


def largest_remainder(shares: list[float], total: int) -> list[int]:
    """Round real shares to integers preserving the exact total.

    Floor everything, then hand the missing units to the largest fractional
    parts (ties: larger share first, then lower index).
    """
    floors = [int(math.floor(s)) for s in shares]
    remainder = total - sum(floors)
    if remainder < 0 or remainder > len(shares):
        raise ConfigurationError(
            f"shares {shares} do not sum to {total} (remainder {remainder})"
        )
    order = sorted(range(len(shares)),
                   key=lambda i: (-(shares[i] - floors[i]), -shares[i], i))
    for i in order[:remainder]:
        floors[i] += 1
    return floors


def uniform_split(total: int, n: int) -> list[int]:
    """Equal split with the remainder going to the lowest indices."""
    base, rem = divmod(total, n)
    return [base + (1 if i < rem else 0) for i in range(n)]


def on_demand_allocate(psnrs, batch_size: int) -> AllocationVector:
    """Slots inversely proportional to PSNR, largest-remainder rounded,
    with a floor of one slot per sub-task so no difficulty is abandoned."""
    p = [float(v) for v in psnrs]
    n = len(p)
    if n == 0:
        raise ConfigurationError("empty PSNR vector")
    if any(v <= 0 for v in p):
        raise ConfigurationError(
            f"PSNR values must be positive, got {p}"
        )
    if batch_size < n:
        raise ConfigurationError(f"batch size {batch_size} smaller than {n} sub-tasks")
    inv = [1.0 / v for v in p]
    total = sum(inv)
    shares = [batch_size * w / total for w in inv]
    counts = largest_remainder(shares, batch_size)
    while any(c == 0 for c in counts):
        needy = min(i for i, c in enumerate(counts) if c == 0)
        top = max(counts)
        donor = min((i for i, c in enumerate(counts) if c == top),
                    key=lambda i: (shares[i], -i))
        counts[donor] -= 1
        counts[needy] += 1
    return counts


def _stage(epoch: int, stage_length: int, n: int) -> int:
    """1-based stage index, clamped to the final stage."""
    return min(math.ceil((epoch + 1) / stage_length), n)


def allocate(state: SchedulerState, batch_size: int, n_subtasks: int = 5
             ) -> AllocationVector:
    """Next-epoch slot counts for any scheduler kind; always sums to batch_size."""
    n = n_subtasks
    if batch_size < 1:
        raise ConfigurationError(f"batch size must be positive, got {batch_size}")
    kind = state.kind
    name = kind.name

    if name in ("rigid_joint", "hard_mining"):
        return uniform_split(batch_size, n)

    if name == "on_demand":
        if state.last_psnr is None:
            if state.epoch >= 1:
                raise ConfigurationError(
                    "on_demand scheduler at epoch >= 1 requires last_psnr"
                )
            return uniform_split(batch_size, n)
        return on_demand_allocate(state.last_psnr, batch_size)

    if name in ("staged_curriculum", "staged_anti"):
        k = _stage(state.epoch, state.stage_length, n)
        level = k if name == "staged_curriculum" else n - k + 1
        counts = [0] * n
        counts[level - 1] = batch_size
        return counts

    if name in ("cumulative_curriculum", "cumulative_anti"):
        k = _stage(state.epoch, state.stage_length, n)
        active = list(range(1, k + 1)) if name == "cumulative_curriculum" \
            else list(range(n - k + 1, n + 1))
        split = uniform_split(batch_size, len(active))
        counts = [0] * n
        for level, c in zip(active, split):
            counts[level - 1] = c
        return counts

    # fixated: everything on one bin forever
    level = kind.fixated_level
    if level is None:
        raise ConfigurationError(
            "fixated scheduler with a parameter value needs fixated_level "
            "resolved before allocation (the training config does this)"
        )
    counts = [0] * n
    counts[min(level, n) - 1] = batch_size
    return counts


def select_hard(losses, k: int) -> list[int]:
    """Indices of the k largest losses, descending, ties to the lower index."""
    values = [float(v) for v in losses]
    if k > len(values):
        raise ConfigurationError(f"k={k} exceeds batch length {len(values)}")
    order = sorted(range(len(values)), key=lambda i: (-values[i], i))
    return order[:k]
