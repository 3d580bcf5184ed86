"""Seed derivation.

All randomness descends from one root seed. A child stream is identified by
``(root, tag, index)``; the tag is hashed with CRC-32 so the mapping is stable
across interpreter runs (``hash()`` is salted).
"""

import zlib

import numpy as np


def derive_seed(root, tag, index=0):
    """Return a 32-bit seed for the stream ``(root, tag, index)``."""
    if int(root) < 0 or int(index) < 0:
        raise ValueError("seeds and indices must be non-negative")
    ss = np.random.SeedSequence([int(root), zlib.crc32(tag.encode("utf-8")), int(index)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def derive_rng(root, tag, index=0):
    return np.random.default_rng(derive_seed(root, tag, index))
