"""Named, reproducible random streams."""

import zlib
from dataclasses import dataclass

import numpy as np

from .exceptions import UsageError

_U32 = 0xFFFFFFFF


@dataclass(frozen=True)
class RngState:
    """A 64-bit seed plus a named sub-stream.

    The same (seed, stream) pair always yields a generator producing the same
    draw sequence, independent of process or hash randomization.
    """

    seed: int
    stream: str = "default"

    def __post_init__(self) -> None:
        if not 0 <= int(self.seed) < 2**64:
            raise UsageError(f"seed must fit in 64 unsigned bits, got {self.seed}")

    def child(self, name: object) -> "RngState":
        return RngState(self.seed, f"{self.stream}/{name}")

    def generator(self) -> np.random.Generator:
        words = [
            int(self.seed) & _U32,
            (int(self.seed) >> 32) & _U32,
            zlib.crc32(self.stream.encode("utf-8")),
        ]
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(words)))
