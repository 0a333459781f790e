"""Deterministic random streams keyed by (seed, tag, index...)."""
from __future__ import annotations

import hashlib

import numpy as np


def _tag_word(tag: str) -> int:
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def stream(seed: int, tag: str, *index: int) -> np.random.Generator:
    """Return an independent counter-based generator for one purpose.

    The entropy is the tuple (seed, hash(tag), *index), so a stream never
    depends on how many draws other streams made before it.
    """
    words = [int(seed) & 0xFFFFFFFFFFFFFFFF, _tag_word(tag)]
    words.extend(int(i) for i in index)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))
