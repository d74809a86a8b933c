"""Deterministic counter-based random streams, namespaced per module.

Every stochastic component draws from its own Philox stream derived from
(seed, namespace).  Streams are independent of creation order and of each
other, so adding a consumer never perturbs existing ones and single-threaded
runs are bit-reproducible.
"""

import hashlib

import numpy as np


def stream(seed: int, namespace: str) -> np.random.Generator:
    """Return the Philox generator for this (seed, namespace) pair."""
    digest = hashlib.sha256(namespace.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(words))
    return np.random.Generator(np.random.Philox(ss))
