"""Seed derivation.

Every random stream is derived from the run seed by hashing the seed
together with a path of labels, so components never share a stream:

    derive_seed(seed, "rollout") = first 8 bytes (LE) of
        blake2b(f"{seed}/rollout", digest_size=8)
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed: int, *labels: object) -> int:
    text = "/".join([str(int(seed))] + [str(x) for x in labels])
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def stream(seed: int, *labels: object) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *labels))
