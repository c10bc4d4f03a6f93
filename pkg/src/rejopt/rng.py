"""Deterministic random number generation.

The package owns its generator so that seeded runs produce identical draws on
every platform and Python build. The core is SplitMix64 (Steele, Lea & Flood,
"Fast splittable pseudorandom number generators", OOPSLA 2014): a counter-based
generator whose state advances by a fixed odd constant (the golden-ratio
increment) and whose output is a 64-bit finalizer of the state. It is tiny,
jump-free, and passes BigCrush when used this way.

Streams: ``Rng(seed, stream=k)`` derives its starting state by finalizing the
seed and the stream id together, so distinct (seed, stream) pairs give
unrelated sequences while staying fully reproducible.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_INV_2_53 = 1.0 / (1 << 53)


def _mix64(z: int) -> int:
    """SplitMix64 output finalizer (murmur-style avalanche)."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


class Rng:
    """SplitMix64 stream with the utility draws the package needs.

    Parameters
    ----------
    seed : int
        Any Python int; reduced mod 2**64.
    stream : int, optional
        Substream id. Different streams from the same seed are independent.
    """

    def __init__(self, seed: int, stream: int = 0):
        if not isinstance(seed, (int, np.integer)):
            raise TypeError(f"seed must be an int, got {type(seed).__name__}")
        if not isinstance(stream, (int, np.integer)):
            raise TypeError(f"stream must be an int, got {type(stream).__name__}")
        self.seed = int(seed)
        self.stream = int(stream)
        self._state = _mix64((int(seed) & _MASK64) ^ _mix64((int(stream) * _GOLDEN) & _MASK64))
        self._spare_normal: float | None = None

    def next_u64(self) -> int:
        """Next raw 64-bit draw."""
        self._state = (self._state + _GOLDEN) & _MASK64
        return _mix64(self._state)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * _INV_2_53

    def below(self, n: int) -> int:
        """Uniform int in [0, n). Unbiased via rejection sampling."""
        if n <= 0:
            raise ValueError(f"below() needs n >= 1, got {n}")
        # Reject draws from the tail that would bias the modulus.
        limit = _MASK64 + 1 - ((_MASK64 + 1) % n)
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n

    def shuffle(self, values: np.ndarray) -> None:
        """In-place Fisher-Yates shuffle of a 1-D array."""
        n = len(values)
        for i in range(n - 1, 0, -1):
            j = self.below(i + 1)
            values[i], values[j] = values[j], values[i]

    def permutation(self, n: int) -> np.ndarray:
        """Random permutation of 0..n-1 as an int64 array."""
        out = np.arange(n, dtype=np.int64)
        self.shuffle(out)
        return out

    def normal(self) -> float:
        """Standard normal draw (Box-Muller, spare cached)."""
        if self._spare_normal is not None:
            z = self._spare_normal
            self._spare_normal = None
            return z
        # u1 in (0, 1] so log() is finite.
        u1 = 1.0 - self.random()
        u2 = self.random()
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = 2.0 * np.pi * u2
        self._spare_normal = float(radius * np.sin(angle))
        return float(radius * np.cos(angle))

    def normals(self, shape) -> np.ndarray:
        """Array of standard normal draws filled in C order."""
        flat = np.empty(int(np.prod(shape)), dtype=np.float64)
        for i in range(flat.size):
            flat[i] = self.normal()
        return flat.reshape(shape)

    def uniforms(self, shape) -> np.ndarray:
        """Array of uniform [0, 1) draws filled in C order."""
        flat = np.empty(int(np.prod(shape)), dtype=np.float64)
        for i in range(flat.size):
            flat[i] = self.random()
        return flat.reshape(shape)

    def child(self, stream: int) -> "Rng":
        """Independent substream of the same seed."""
        return Rng(self.seed, stream=stream)

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Rng(seed={self.seed}, stream={self.stream})"
