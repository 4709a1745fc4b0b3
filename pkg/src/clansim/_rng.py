"""Deterministic random substreams.

Every stream is a Philox generator whose 128-bit key is a blake2b digest of
``(master seed, module tag, replica, item key)``.  The same tuple always
yields the same stream, regardless of how work is split across workers or
in which order items are visited.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def stream_key(seed: int, tag: str, replica: int = 0, item: object = None) -> np.ndarray:
    """Return the Philox key (two uint64 words) for a substream."""
    text = f"{int(seed) & MASK64}|{tag}|{int(replica)}|{item!r}".encode()
    digest = hashlib.blake2b(text, digest_size=16).digest()
    return np.frombuffer(digest, dtype="<u8").copy()


def substream(seed: int, tag: str, replica: int = 0, item: object = None) -> np.random.Generator:
    """Return an independent generator for one (tag, replica, item) triple."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, tag, replica, item)))


def check_seed(seed) -> int:
    """Validate a master seed and return it as a Python int."""
    if isinstance(seed, (bool, np.bool_)) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    seed = int(seed)
    if seed < 0 or seed > MASK64:
        raise ValueError("seed must lie in [0, 2**64 - 1]")
    return seed
