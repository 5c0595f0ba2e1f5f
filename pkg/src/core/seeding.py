#!/usr/bin/env python3
"""
Named seed streams.

Every random consumer derives its own stream from the master seed and a
purpose label, so adding a consumer never shifts another one's draws.
"""

import hashlib
from typing import Union

import numpy as np

Label = Union[str, int]


def derive_seed(master: int, *labels: Label) -> int:
    """Deterministic 63-bit seed for (master, labels...)."""
    text = ":".join([str(int(master))] + [str(label) for label in labels])
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") & ((1 << 63) - 1)


def rng_for(master: int, *labels: Label) -> np.random.Generator:
    """Independent generator for one named stream."""
    return np.random.default_rng(derive_seed(master, *labels))
