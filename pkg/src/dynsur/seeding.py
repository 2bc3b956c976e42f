"""Deterministic seed derivation.

All randomness in a pipeline flows from one master seed through named
sub-streams, so rerunning a configuration reproduces every output.
Stream names are hashed with SHA-256 so the derivation is stable across
platforms and Python versions (no reliance on ``hash()``).
"""

import hashlib

import numpy as np


def substream_seed(master_seed: int, name: str) -> int:
    """Derive a 64-bit seed for the sub-stream ``name``."""
    digest = hashlib.sha256(f"{master_seed}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(master_seed: int, name: str) -> np.random.Generator:
    """A fresh PCG64 generator for the named sub-stream."""
    return np.random.default_rng(substream_seed(master_seed, name))
