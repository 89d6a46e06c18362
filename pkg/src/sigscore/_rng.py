"""Seed-stream derivation.

Every random draw in a run flows from one master seed. Sub-streams are
derived by hashing ``(master_seed, purpose)`` so that adding or reordering
consumers never perturbs unrelated streams.
"""

import hashlib

import numpy as np


def derive_seed(master_seed: int, purpose: str) -> int:
    """Derive a 63-bit child seed from a master seed and a purpose string."""
    digest = hashlib.sha256(f"{master_seed}:{purpose}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def derive_rng(master_seed: int, purpose: str) -> np.random.Generator:
    """Generator seeded from ``derive_seed(master_seed, purpose)``."""
    return np.random.default_rng(derive_seed(master_seed, purpose))
