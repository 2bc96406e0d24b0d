"""Named, counter-based random streams derived from one integer seed."""
from __future__ import annotations

import hashlib

import numpy as np


def stream(seed: int, name: str) -> np.random.Generator:
    """Philox generator keyed by (seed, name); independent of call order."""
    digest = hashlib.sha256(f"{int(seed)}:{name}".encode()).digest()
    key = int.from_bytes(digest[:16], "little")
    return np.random.Generator(np.random.Philox(key=key))
