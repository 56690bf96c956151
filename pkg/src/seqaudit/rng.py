"""Counter-based random streams derived by labelled splitting.

Every consumer asks for ``make_rng(seed, "label", index, ...)``; the labels
become the ``spawn_key`` of a :class:`numpy.random.SeedSequence` feeding a
Philox generator.  Streams therefore depend only on (seed, labels), never on
the order in which other streams were drawn.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key(label) -> int:
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError("integer labels must be nonnegative")
        return int(label)
    return zlib.crc32(str(label).encode("utf-8"))


def make_rng(seed: int, *labels) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(x) for x in labels))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *labels) -> int:
    """A 63-bit integer seed for APIs that only accept ints."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(x) for x in labels))
    return int(ss.generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))
