"""Seeded random streams.

Every stream is a PCG64 bit generator keyed by a ``numpy.random.SeedSequence``
built from the integer entropy ``(seed, *keys)``. PCG64 is a 128-bit integer
state machine and SeedSequence hashing is pure integer arithmetic, so the raw
bit stream is identical on every platform. Floats are drawn with
``Generator.random`` (53 high bits scaled by 2**-53), integers with
``Generator.integers`` (Lemire rejection on integers); neither touches
platform-dependent math.
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


class RngStream:
    """A reproducible stream of uniform draws.

    Child streams for parallel tasks come from :meth:`derive`, which keys a
    fresh stream on ``(seed, *keys)`` so results do not depend on schedule.
    """

    def __init__(self, seed: int, *keys: int):
        seed = int(seed)
        if seed < 0 or seed > _MASK64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = seed
        self.keys = tuple(int(k) for k in keys)
        entropy = [seed, *[k & _MASK64 for k in self.keys]]
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, keys={self.keys})"

    def derive(self, *keys: int) -> RngStream:
        """Independent stream keyed on this stream's seed and keys plus ``keys``."""
        return RngStream(self.seed, *self.keys, *keys)

    def random(self, size=None):
        """Uniform draw(s) in ``[0, 1)``."""
        return self._gen.random(size)

    def uniform(self, low, high, size=None):
        """Uniform draw(s) in ``[low, high)``; ``low == high`` returns ``low``."""
        u = self._gen.random(size)
        return low + (high - low) * u

    def integers(self, low: int, high: int, size=None):
        """Integer draw(s) in ``[low, high)``."""
        out = self._gen.integers(low, high, size=size, dtype=np.int64)
        return int(out) if size is None else out

    def bernoulli(self, p: float) -> bool:
        """One trigger decision; always consumes exactly one draw."""
        return bool(self._gen.random() < p)

    def state_bytes(self) -> bytes:
        """Serialized generator state, for determinism checks."""
        st = self._gen.bit_generator.state["state"]
        return int(st["state"]).to_bytes(16, "little") + int(st["inc"]).to_bytes(16, "little")
