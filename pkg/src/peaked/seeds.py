"""Deterministic seed derivation.

Every row of an experiment is reproducible on its own: an instance seed is a
hash of the master seed and the instance index, and each optimizer restart
seed is a hash of the instance seed and the restart index.
"""
from __future__ import annotations

import hashlib
import struct


def derive_seed(parent: int, index: int) -> int:
    """63-bit child seed of ``parent`` for position ``index``."""
    digest = hashlib.blake2b(struct.pack("<qq", int(parent) & (2**63 - 1), int(index)), digest_size=8).digest()
    return int.from_bytes(digest, "little") & (2**63 - 1)
