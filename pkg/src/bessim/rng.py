"""Seeded random streams, one per stochastic consumer.

Each stream is an independent PRNG derived from (run seed, stream label),
so adding or removing one consumer never shifts the draws of another and
the same (seed, label, draw index) always yields the same value.
"""

from __future__ import annotations

import hashlib
import random


def _derive_seed(seed: int, stream_id: str) -> int:
    digest = hashlib.sha256(f"{seed}:{stream_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


class RngStream:
    """One labelled random stream (e.g. "drop:s2c", "consumption-noise")."""

    def __init__(self, seed: int, stream_id: str):
        self.seed = seed
        self.stream_id = stream_id
        self._rng = random.Random(_derive_seed(seed, stream_id))

    def uniform(self, lo: float, hi: float) -> float:
        return self._rng.uniform(lo, hi)

    def random(self) -> float:
        return self._rng.random()


class RngHub:
    """Creates and caches the per-consumer streams for one run."""

    def __init__(self, seed: int):
        self.seed = seed
        self._streams: dict[str, RngStream] = {}

    def stream(self, stream_id: str) -> RngStream:
        if stream_id not in self._streams:
            self._streams[stream_id] = RngStream(self.seed, stream_id)
        return self._streams[stream_id]
