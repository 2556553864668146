"""Reproducible random number streams.

Every randomized operation takes an :class:`RngStream` instead of a bare
seed.  A stream is identified by ``(seed, stream)``; the same pair always
reproduces the same draws on a given build.  Independent replications get
independent streams by varying the stream id, and operations that need
internal sub-generators (one per replicate, per bootstrap round, ...)
derive them through ``child_generator`` so that no coordination between
workers is required.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    """A named, reproducible random stream."""

    seed: int
    stream: int = 0

    def _sequence(self, *key: int) -> np.random.SeedSequence:
        return np.random.SeedSequence(
            entropy=self.seed & _MASK64, spawn_key=(self.stream, *key)
        )

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        return np.random.default_rng(self._sequence())

    def child(self, *key: int) -> "RngStream":
        """Stream derived from this one; distinct keys give independent streams."""
        mixed = self._sequence(*key).generate_state(1, dtype=np.uint64)[0]
        return RngStream(seed=int(mixed), stream=0)

    def child_generator(self, *key: int) -> np.random.Generator:
        """Generator for the derived stream ``key`` (replicate ids etc.)."""
        return np.random.default_rng(self._sequence(*key))
