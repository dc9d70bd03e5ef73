"""Seeded counter-based random streams"""
import zlib
from typing import Optional, Sequence, Union

import numpy as np

Tag = Union[int, str]


def _tag_to_int(tag: Tag) -> int:
    if isinstance(tag, str):
        return zlib.crc32(tag.encode("utf-8"))
    return int(tag)


class Rng:
    """
    Philox-backed generator keyed by a 64-bit seed

    Child streams are derived from (seed, tags) through SeedSequence spawn keys,
    so a component's draws never depend on how many draws another component made.
    """

    def __init__(self, seed: int, spawn_key: Sequence[int] = ()):
        if seed < 0 or seed >= 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self.spawn_key = tuple(int(k) for k in spawn_key)
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self.spawn_key)
        self.generator = np.random.Generator(np.random.Philox(seq))

    def child(self, *tags: Tag) -> "Rng":
        """Independent stream for the given tags"""
        return Rng(self.seed, self.spawn_key + tuple(_tag_to_int(t) for t in tags))

    def normal(self, size, scale: float = 1.0) -> np.ndarray:
        return self.generator.normal(0.0, scale, size=size)

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self.generator.uniform(low, high, size=size)

    def random(self, size=None):
        return self.generator.random(size=size)

    def integers(self, low: int, high: Optional[int] = None, size=None):
        return self.generator.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self.generator.choice(n, size=size, replace=replace)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, spawn_key={self.spawn_key})"
