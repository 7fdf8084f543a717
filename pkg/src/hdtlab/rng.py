"""Counter-based random streams keyed by (master_seed, stream_id)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class RngStream:
    """Deterministic random stream.

    The draw sequence depends only on ``master_seed``, ``stream_id`` and the
    ``sub`` path, never on call order elsewhere in the program, so parallel
    workers given distinct ids reproduce a serial run exactly.
    """

    master_seed: int
    stream_id: int = 0
    sub: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if int(self.stream_id) < 0 or any(int(s) < 0 for s in self.sub):
            raise ValueError("stream ids must be non-negative")

    def substream(self, *idx: int) -> "RngStream":
        return RngStream(self.master_seed, self.stream_id, self.sub + tuple(int(i) for i in idx))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.master_seed), spawn_key=(int(self.stream_id),) + self.sub)
        return np.random.Generator(np.random.Philox(ss))


def as_generator(rng) -> np.random.Generator:
    """Accept an RngStream, a Generator, or an int seed."""
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        raise ValueError("an explicit rng is required")
    return RngStream(int(rng)).generator()
