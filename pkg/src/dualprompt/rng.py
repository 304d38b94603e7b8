"""Deterministic random streams.

Every random draw in the pipeline comes from a stream derived from one root
seed plus a text label, so adding a consumer never perturbs the draws seen by
existing ones.  The generator is pinned to a fixed algorithm rather than any
library default so that runs reproduce bit-for-bit across platforms and so
that the stream can be re-implemented exactly from this docstring:

* ``derive_seed(root, label)`` — XOR the 64-bit root with the FNV-1a hash of
  the UTF-8 label, then apply the splitmix64 finalizer twice.
* ``Stream`` — xoshiro256** with its 256-bit state expanded from the 64-bit
  seed by four splitmix64 steps.
* uniforms — the top 53 bits of the next u64, scaled by 2^-53 (range [0, 1)).
* normals — Box-Muller: ``sqrt(-2 ln u1) * cos(2 pi u2)`` with
  ``u1 = (top53 + 1) * 2^-53`` (range (0, 1]) drawn first, then ``u2``.
  The sine companion is discarded, so one normal always consumes exactly two
  u64 draws.
* bounded ints — ``next_u64() % n`` (modulo bias is irrelevant at the sizes
  used here and keeps the mapping integer-exact).
* shuffles — Fisher-Yates from the top index downward.

All arithmetic is modulo 2^64.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_TWO53 = float(1 << 53)


def _mix64(z: int) -> int:
    """splitmix64 output finalizer."""
    z = (z + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h = ((h ^ byte) * 0x100000001B3) & _MASK64
    return h


def derive_seed(root: int, label: str) -> int:
    """Map (root seed, label) to an independent 64-bit stream seed."""
    x = (root & _MASK64) ^ fnv1a64(label.encode("utf-8"))
    return _mix64(_mix64(x))


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Stream:
    """xoshiro256** seeded through splitmix64 state expansion."""

    __slots__ = ("_s",)

    def __init__(self, seed: int):
        state = []
        z = seed & _MASK64
        for _ in range(4):
            z = (z + _GOLDEN) & _MASK64
            state.append(_mix64(z))
        self._s = state

    def next_u64(self) -> int:
        s = self._s
        result = (_rotl((s[1] * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s[1] << 17) & _MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def random(self) -> float:
        """Uniform float64 in [0, 1)."""
        return (self.next_u64() >> 11) * (1.0 / _TWO53)

    def normal(self, std: float = 1.0) -> float:
        u1 = ((self.next_u64() >> 11) + 1) * (1.0 / _TWO53)
        u2 = (self.next_u64() >> 11) * (1.0 / _TWO53)
        return std * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def normals(self, rows: int, cols: int, std: float = 1.0) -> np.ndarray:
        """Row-major (rows x cols) matrix of independent normals."""
        out = np.empty((rows, cols), dtype=np.float64)
        flat = out.reshape(-1)
        for i in range(flat.size):
            flat[i] = self.normal(std)
        return out

    def randbelow(self, n: int) -> int:
        if n <= 0:
            raise ValueError("randbelow needs n >= 1")
        return self.next_u64() % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def choice(self, items):
        if not len(items):
            raise ValueError("choice from empty sequence")
        return items[self.randbelow(len(items))]


def stream(root: int, label: str) -> Stream:
    return Stream(derive_seed(root, label))
