"""Deterministic per-stage seed derivation from one global seed.

Each pipeline stage owns an independent RNG stream derived from the
global seed and a stage label, so any stage can be reproduced in
isolation. The mixer is splitmix64; labels are folded in through CRC32
(Python's hash() is salted per process and must not be used here).
"""

from __future__ import annotations

import zlib

_MASK = (1 << 64) - 1


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def derive_seed(root: int, *labels: str | int) -> int:
    """Derive a stage seed from `root` and a sequence of labels."""
    state = root & _MASK
    for label in labels:
        if isinstance(label, int):
            state ^= label & _MASK
        else:
            state ^= zlib.crc32(label.encode("utf-8"))
        state = _splitmix64(state)
    return _splitmix64(state)
