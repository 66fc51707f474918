"""Deterministic derivation of independent RNG streams from one root seed.

Every stochastic stage of an experiment owns a stream tagged by name (and
optionally an index), so results do not depend on execution order or on how
many workers run concurrently.
"""

from __future__ import annotations

import zlib

import numpy as np


def _tag(value) -> int:
    if isinstance(value, str):
        return zlib.crc32(value.encode("utf8"))
    return int(value) & 0xFFFFFFFF


def derive_seed(root: int, *stream) -> int:
    """A stable 64-bit seed for the stream identified by (root, *stream)."""
    entropy = [int(root) & 0xFFFFFFFFFFFFFFFF] + [_tag(v) for v in stream]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])


def derive_rng(root: int, *stream) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, *stream))
