"""Keyed, reproducible Gaussian noise.

Every draw in the pipeline comes from a stream derived from the global seed plus a
tuple of keys (axis, line index, step, phase, ...). The streams do not depend on the
order in which clips are processed, so serial and parallel runs match bit for bit.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum

import numpy as np


def _key_int(key) -> int:
    if isinstance(key, Enum):
        key = key.value
    if isinstance(key, (bool, np.bool_)):
        return int(key)
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError(f"noise keys must be non-negative, got {key}")
        return int(key)
    digest = hashlib.sha256(str(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class NoiseSource:
    seed: int
    keys: tuple = ()

    def child(self, *keys) -> "NoiseSource":
        return NoiseSource(self.seed, self.keys + tuple(keys))

    def generator(self) -> np.random.Generator:
        entropy = [_key_int(self.seed)] + [_key_int(k) for k in self.keys]
        return np.random.default_rng(np.random.SeedSequence(entropy))

    def normal(self, shape, dtype=np.float32) -> np.ndarray:
        """Standard normal draws for this key path; equal paths give equal arrays."""
        return self.generator().standard_normal(shape, dtype=dtype)
