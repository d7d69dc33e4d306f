"""Seed discipline: every random draw comes from a labelled child stream.

Streams are numpy ``PCG64`` generators keyed by a ``SeedSequence`` whose
spawn key is the derivation path. Labels are mapped to integers with CRC-32,
so a path such as ``("episode", 3, 1)`` names the same stream on every
platform and in every process. Gaussian draws use numpy's ziggurat
``standard_normal``.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError(f"stream indices must be >= 0, got {part}")
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


@dataclass(frozen=True)
class RngStream:
    master_seed: int
    path: tuple = ()

    def child(self, *parts) -> "RngStream":
        return RngStream(self.master_seed, self.path + tuple(parts))

    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(entropy=int(self.master_seed), spawn_key=tuple(_key(p) for p in self.path))

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed_sequence()))

    def __str__(self) -> str:
        return f"{self.master_seed}:" + "/".join(str(p) for p in self.path)
