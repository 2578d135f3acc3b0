"""Counter-based randomness streams.

All stochastic code in the toolkit draws from Philox-keyed generators so
that a run is fully determined by its seed, and so that the draws made for
one agent never shift when another agent is added or removed.
"""

from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1

# substream kinds (counter high word)
_KIND_ENV = 0
_KIND_AGENT = 1


def _fresh_philox(key0: int, key1: int, c2: int = 0, c3: int = 0) -> np.random.Generator:
    key = np.array([key0 & _MASK64, key1 & _MASK64], dtype=np.uint64)
    counter = np.array([0, 0, c2 & _MASK64, c3 & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


def named_generator(seed: int, *tags: object) -> np.random.Generator:
    """Generator keyed by a seed and a stable sequence of tags.

    Tags may be strings or ints; strings hash via crc32 so the mapping is
    stable across processes and platforms.
    """
    mixed = 0
    for tag in tags:
        part = zlib.crc32(tag.encode()) if isinstance(tag, str) else int(tag)
        mixed = ((mixed * 1000003) ^ part) & _MASK64
    return _fresh_philox(int(seed), mixed)


class RolloutStream:
    """Per-rollout randomness, split per agent and per step.

    Agent i's draw at step t comes from an independent substream keyed by
    (seed, episode, agent=i, step=t); the environment's own draws use a
    separate kind tag. Adding agents therefore does not perturb the draws
    any existing agent sees.

    Substreams share one recycled bit generator: each ``agent``/``env``
    call rewinds it to the requested counter, so the returned generator is
    valid only until the next call on this stream. Streams are single-owner
    objects; never share one across concurrent rollouts.
    """

    __slots__ = ("seed", "episode", "_bitgen", "_state", "_gen")

    def __init__(self, seed: int, episode: int = 0):
        self.seed = int(seed) & _MASK64
        self.episode = int(episode) & _MASK64
        self._bitgen = np.random.Philox(
            counter=np.zeros(4, dtype=np.uint64),
            key=np.array([self.seed, self.episode], dtype=np.uint64),
        )
        self._state = self._bitgen.state
        self._gen = np.random.Generator(self._bitgen)

    def _sub(self, kind: int, index: int, step: int) -> np.random.Generator:
        state = self._state
        inner = state["state"]
        inner["counter"][2] = ((kind << 32) | (index & 0xFFFFFFFF)) & _MASK64
        inner["counter"][3] = step & _MASK64
        inner["counter"][0] = 0
        inner["counter"][1] = 0
        inner["key"][0] = self.seed
        inner["key"][1] = self.episode
        state["buffer_pos"] = 64
        state["has_uint32"] = 0
        self._bitgen.state = state
        return self._gen

    def agent(self, index: int, step: int) -> np.random.Generator:
        return self._sub(_KIND_AGENT, index, step)

    def env(self, step: int) -> np.random.Generator:
        return self._sub(_KIND_ENV, 0, step)

    def child(self, episode: int) -> "RolloutStream":
        """Stream for a sibling episode under the same seed."""
        return RolloutStream(self.seed, episode)


def as_stream(source: "int | RolloutStream", episode: int = 0) -> RolloutStream:
    if isinstance(source, RolloutStream):
        return source
    return RolloutStream(int(source), episode)
