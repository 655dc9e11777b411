"""Counter-based random number streams.

Every stochastic routine in the package draws from a stream keyed by
``(seed, *labels)`` where the labels name the purpose and replica, e.g.
``stream(7, "noise", replica=3)``.  Streams are mutually independent Philox
counter-based generators, so results are reproducible bit-for-bit regardless
of scheduling or worker count, provided each consumer owns its label.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key128(seed: int, labels: tuple) -> list[int]:
    """Derive a 128-bit Philox key from (seed, labels) via SHA-256."""
    text = repr((int(seed),) + labels).encode()
    digest = hashlib.sha256(text).digest()
    return [int.from_bytes(digest[0:8], "little"),
            int.from_bytes(digest[8:16], "little")]


def stream(seed: int, *labels, **kw_labels) -> np.random.Generator:
    """Return an independent generator for this (seed, purpose) combination.

    Keyword labels are folded in sorted order so call sites may name replicas
    explicitly: ``stream(seed, "paths", replica=12)``.
    """
    flat = tuple(labels) + tuple(sorted(kw_labels.items()))
    return np.random.Generator(np.random.Philox(key=_key128(seed, flat)))
