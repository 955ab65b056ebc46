"""Splittable, addressable random streams.

A :class:`RandomSource` names a stream by a master seed and a tuple key such as
``(replica, "plus")``. The generator it produces depends only on that name, so
results do not depend on scheduling or on how many workers run the replicas.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np


def _key_int(k) -> int:
    if isinstance(k, (bool, np.bool_)):
        return int(k)
    if isinstance(k, (int, np.integer)):
        if k < 0:
            raise ValueError("stream keys must be nonnegative")
        return int(k)
    if isinstance(k, str):
        return zlib.crc32(k.encode()) | (1 << 32)  # keep string keys apart from small ints
    raise TypeError(f"unsupported stream key {k!r}")


@dataclass(frozen=True)
class RandomSource:
    master_seed: int
    stream_id: tuple = ()

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "stream_id", tuple(self.stream_id))

    def child(self, *key) -> RandomSource:
        return RandomSource(self.master_seed, self.stream_id + key)

    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(
            entropy=int(self.master_seed),
            spawn_key=tuple(_key_int(k) for k in self.stream_id),
        )

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at the start of this stream."""
        return np.random.Generator(np.random.PCG64(self.seed_sequence()))


def as_source(rng) -> RandomSource:
    if isinstance(rng, RandomSource):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RandomSource(int(rng))
    raise TypeError("expected a RandomSource or an integer seed")
