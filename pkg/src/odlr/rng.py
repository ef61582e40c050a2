"""Reproducible random streams.

All randomness in the package flows through Philox counter-based generators
keyed by numpy SeedSequence hashing of structured entropy tuples. The same
(ints/strings...) tuple always yields the same stream, on any platform, and
independent tuples yield statistically independent streams, so corruption
generation can be parallelized or replayed per (image, epoch) without any
ordering dependence.
"""

from __future__ import annotations

import numpy as np


def _as_entropy(item) -> int:
    if isinstance(item, (int, np.integer)):
        v = int(item)
        if v < 0:
            raise ValueError(f"entropy ints must be non-negative, got {v}")
        return v
    if isinstance(item, str):
        return int.from_bytes(item.encode("utf-8"), "little")
    raise TypeError(f"cannot use {type(item).__name__} as RNG entropy")


def derive_rng(*entropy) -> np.random.Generator:
    """Philox generator keyed by the entropy tuple."""
    seq = np.random.SeedSequence([_as_entropy(e) for e in entropy])
    return np.random.Generator(np.random.Philox(seq))


def derive_seed(*entropy) -> int:
    """Stable 64-bit seed derived from the entropy tuple."""
    seq = np.random.SeedSequence([_as_entropy(e) for e in entropy])
    lo, hi = seq.generate_state(2, np.uint32)
    return int(lo) | (int(hi) << 32)
