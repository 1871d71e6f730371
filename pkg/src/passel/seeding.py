"""Deterministic counter-style substreams derived from one master seed.

Every random draw in a run comes from a substream addressed by a small
integer tuple (domain tag plus indices), so results are reproducible and
independent of batch composition, worker count, and evaluation order.

Address layout: ``substream(seed, TAG, *indices)`` feeds the whole tuple as
SeedSequence entropy. Tags below partition the domains; indices are
documented at each call site (channel index, block index, span index, ...).
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "TAG_DATA",
    "TAG_ASE",
    "TAG_SCRAMBLER",
    "TAG_PERMUTATION",
    "substream",
]

TAG_DATA = 1         # information bits / sampled amplitudes, per (channel, block)
TAG_ASE = 2          # amplifier noise, per (block, span)
TAG_SCRAMBLER = 3    # scrambler book masks, per mask index
TAG_PERMUTATION = 4  # permutation book entries, per permutation index


def substream(seed: int, *key: int) -> np.random.Generator:
    """Generator for the substream addressed by (seed, *key)."""
    if seed < 0:
        raise ValueError("master seed must be a non-negative integer")
    if any(k < 0 for k in key):
        raise ValueError("substream indices must be non-negative")
    return np.random.default_rng(np.random.SeedSequence(entropy=(int(seed), *map(int, key))))
