"""Labeled deterministic random streams.

Every consumer asks for its own stream by label, e.g.
``stream(seed, "fleet", "deps")``.  The stream seed is the first 8 bytes of
SHA-256 over the seed and labels, fed into :class:`random.Random`
(MT19937).  Adding a new consumer never shifts the draws of an existing one.
"""

from __future__ import annotations

import hashlib
import math
import random


def derive_seed(seed: int, *labels: object) -> int:
    h = hashlib.sha256(str(int(seed)).encode())
    for label in labels:
        h.update(b"\x1f")
        h.update(str(label).encode())
    return int.from_bytes(h.digest()[:8], "big")


def stream(seed: int, *labels: object) -> random.Random:
    return random.Random(derive_seed(seed, *labels))


def unit(seed: int, *labels: object) -> float:
    """A single uniform draw in [0, 1) keyed by labels, without a stream object."""
    return derive_seed(seed, *labels) / 2.0**64


def poisson(rng: random.Random, lam: float) -> int:
    # Knuth; fine for the small rates used here
    if lam <= 0:
        return 0
    limit = math.exp(-lam)
    k, p = 0, rng.random()
    while p > limit:
        k += 1
        p *= rng.random()
    return k


def largest_remainder(weights: dict, total: int) -> dict:
    """Integer allocation of ``total`` proportional to ``weights``.

    Ties on the remainder break by key order, so the result is deterministic.
    """
    wsum = sum(weights.values())
    raw = {k: total * w / wsum for k, w in weights.items()}
    alloc = {k: int(math.floor(v)) for k, v in raw.items()}
    short = total - sum(alloc.values())
    order = sorted(raw, key=lambda k: (-(raw[k] - alloc[k]), str(k)))
    for k in order[:short]:
        alloc[k] += 1
    return alloc
