"""Deterministic RNG fan-out.

All randomness in the pipeline flows from a single 64-bit seed. Named
substreams keep independent consumers (augmentation, dropout, bootstrap,
per-fold training) decoupled: drawing more numbers in one stream never
shifts another.
"""

import zlib

import numpy as np


def substream(seed: int, *names) -> np.random.Generator:
    """Generator for the substream identified by ``names`` under ``seed``.

    Names may be strings or integers; strings are hashed with crc32 so the
    derivation is stable across platforms and Python processes.
    """
    entropy = [int(seed)]
    for name in names:
        if isinstance(name, (int, np.integer)):
            entropy.append(int(name))
        else:
            entropy.append(zlib.crc32(str(name).encode("utf-8")))
    return np.random.default_rng(np.random.SeedSequence(entropy))
