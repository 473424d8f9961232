"""Named random streams.

Every random choice in the pipeline (split, init, shuffle, dropout, OOV
embedding rows) draws from its own stream derived from the single user
seed, so each component is reproducible on its own and adding randomness
to one component never perturbs another.
"""

import hashlib

import numpy as np


def named_rng(seed: int, name: str) -> np.random.Generator:
    """Generator for stream `name`, derived deterministically from `seed`."""
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    stream = int.from_bytes(digest[:8], "little")
    return np.random.default_rng([seed, stream])
