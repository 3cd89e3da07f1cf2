from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np
import numpy.typing as npt

# Philox counters are 256 bit; the upper half indexes sub-streams.
_INDEX_SHIFT = 128


class Stream(IntEnum):
    WEIGHTS = 1
    EDGES = 2
    PLANTED = 3
    RESAMPLE = 4
    BUCKETED = 5
    COUPLING_DELETE = 6
    PROGENY = 7
    IMPORTANCE = 8
    HUB_SEARCH = 9


@dataclass(frozen=True)
class StreamFactory:
    """Counter-based random streams addressed by (seed, path, stream, index).

    Each address maps to a Philox generator with its own key and a disjoint
    counter range, so draws never depend on evaluation order or worker count.
    """

    seed: int
    path: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    @property
    def label(self) -> str:
        return ":".join(str(part) for part in (self.seed, *self.path))

    def child(self, index: int) -> StreamFactory:
        return StreamFactory(self.seed, (*self.path, int(index)))

    def key(self, stream: Stream) -> npt.NDArray[np.uint64]:
        sequence = np.random.SeedSequence(self.seed, spawn_key=(*self.path, int(stream)))
        return sequence.generate_state(2, dtype=np.uint64)

    def generator(self, stream: Stream, index: int = 0) -> np.random.Generator:
        return generator_for_key(self.key(stream), index)


def generator_for_key(key: npt.NDArray[np.uint64], index: int) -> np.random.Generator:
    if index < 0:
        raise ValueError("stream index must be non-negative")
    return np.random.Generator(np.random.Philox(key=key, counter=int(index) << _INDEX_SHIFT))
