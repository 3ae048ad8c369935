"""Labelled, counter-based random streams.

Every consumer of randomness asks for its own stream by purpose label
(``"env"``, ``"noise"``, ``"replay"``, ...). Streams are Philox generators
whose 128-bit key is a SHA-256 digest of ``(seed, label)``, so a stream's
sequence depends only on those two values and never on how many draws other
streams have made.
"""

from __future__ import annotations

import hashlib

import numpy as np


class RngStream:
    """Single-owner wrapper around a keyed :class:`numpy.random.Generator`."""

    def __init__(self, seed: int, label: str):
        if not 0 <= seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = int(seed)
        self.label = label
        digest = hashlib.sha256(f"{self.seed}\x1f{label}".encode()).digest()
        key = np.frombuffer(digest[:16], dtype="<u8").astype(np.uint64)
        self.generator = np.random.Generator(np.random.Philox(key=key))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, label={self.label!r})"

    def child(self, label: str) -> "RngStream":
        return RngStream(self.seed, f"{self.label}/{label}")

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def random(self, size=None):
        return self.generator.random(size)


def derive_stream(seed: int, label: str) -> RngStream:
    return RngStream(seed, label)
