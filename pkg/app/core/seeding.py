"""
Seed discipline.

Every random draw in the workbench comes from a numpy PCG64 generator. Child
streams are derived either by XOR with a small index (chains, reads) or by
hashing a tuple of parts (epochs, batches, genomes).
"""

import hashlib
import json

import numpy as np

SEED_MASK = (1 << 63) - 1


def make_rng(seed: int) -> np.random.Generator:
    """The single named generator used for every seeded draw."""
    return np.random.Generator(np.random.PCG64(int(seed) & SEED_MASK))


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from any JSON-serialisable parts."""
    payload = json.dumps(parts, sort_keys=True, separators=(",", ":"), default=str)
    return int.from_bytes(hashlib.sha256(payload.encode()).digest()[:8], "big") & SEED_MASK


def chain_rngs(seed: int, count: int) -> list[np.random.Generator]:
    """One generator per chain, seeded with ``seed ^ chain_index``."""
    return [make_rng(int(seed) ^ i) for i in range(count)]
