"""Counter-based seed derivation.

Every stochastic component draws from a Philox generator keyed by a master
seed and an integer path (stage, family, window, roll ...). Results then
depend only on the path, never on execution order or worker count.
"""

from __future__ import annotations

import zlib

import numpy as np


def _as_int(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part)


def derive_seed(master: int, *path) -> int:
    """A 63-bit seed determined by ``master`` and ``path``."""
    seq = np.random.SeedSequence(entropy=int(master), spawn_key=tuple(_as_int(p) for p in path))
    return int(seq.generate_state(1, dtype=np.uint64)[0]) >> 1


def generator(seed: int, *path) -> np.random.Generator:
    if path:
        seed = derive_seed(seed, *path)
    return np.random.Generator(np.random.Philox(key=int(seed)))
