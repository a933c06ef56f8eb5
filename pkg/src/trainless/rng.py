"""Reproducible random streams on top of Philox4x64-10.

Every random draw in the package goes through :class:`Rng`.  The engine is
numpy's ``Philox`` bit generator, which implements the counter-based
Philox4x64 function with 10 rounds (Salmon et al., "Parallel random numbers:
as easy as 1, 2, 3", SC 2011).  A stream is identified by a 128-bit key
``(seed, stream)``; the n-th block of four 64-bit words is
``philox4x64_10(counter=(n, 0, 0, 0), key)`` for ``n = 1, 2, ...`` and words
are consumed in order 0..3.

Derived quantities use fixed transforms so the streams can be reproduced
outside numpy (see ``docs/rng.md`` for the test vectors):

* ``random()``    -> ``(w >> 11) * 2**-53``
* ``randbelow(n)`` -> rejection: draw ``w`` until ``w < 2**64 - (2**64 % n)``,
  return ``w % n``
* ``normal(k)``   -> Box-Muller on consecutive word pairs ``(a, b)``:
  ``u1 = ((a >> 11) + 1) * 2**-53``, ``u2 = (b >> 11) * 2**-53``,
  emitting ``r cos(2 pi u2)`` then ``r sin(2 pi u2)`` with
  ``r = sqrt(-2 ln u1)``.

Child streams are derived with :func:`derive_stream`, a SplitMix64 fold.
"""

from __future__ import annotations

import math
from typing import MutableSequence, Sequence, TypeVar

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_TWO_NEG_53 = 2.0**-53

T = TypeVar("T")


def mix64(z: int) -> int:
    """SplitMix64 output finalizer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_stream(stream: int, *path: int) -> int:
    """Fold integer labels into a stream word: ``s <- mix64(s + gamma + p)``."""
    s = stream & MASK64
    for p in path:
        s = mix64(s + GOLDEN_GAMMA + (p & MASK64))
    return s


def derive_seed(seed: int, *path: int) -> int:
    """A 64-bit seed for a child computation, e.g. one network of a corpus."""
    return derive_stream(seed, *path)


class Rng:
    """A keyed Philox stream with documented, portable transforms."""

    __slots__ = ("seed", "stream", "_bitgen")

    def __init__(self, seed: int, stream: int = 0):
        if seed < 0 or stream < 0:
            raise ValueError("seed and stream must be non-negative")
        self.seed = seed & MASK64
        self.stream = stream & MASK64
        self._bitgen = np.random.Philox(key=self.seed | (self.stream << 64))

    def child(self, *path: int) -> "Rng":
        return Rng(self.seed, derive_stream(self.stream, *path))

    def next_u64(self) -> int:
        return int(self._bitgen.random_raw())

    def raw(self, n: int) -> np.ndarray:
        return self._bitgen.random_raw(n)

    def random(self) -> float:
        return (self.next_u64() >> 11) * _TWO_NEG_53

    def randbelow(self, n: int) -> int:
        if n <= 0:
            raise ValueError("randbelow needs n >= 1")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            w = self.next_u64()
            if w < limit:
                return w % n

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in the closed interval [lo, hi]."""
        return lo + self.randbelow(hi - lo + 1)

    def choice(self, seq: Sequence[T]) -> T:
        return seq[self.randbelow(len(seq))]

    def weighted_index(self, weights: Sequence[float]) -> int:
        total = math.fsum(weights)
        if not total > 0:
            raise ValueError("weights must have a positive sum")
        x = self.random() * total
        acc = 0.0
        for i, w in enumerate(weights):
            acc += w
            if x < acc and w > 0:
                return i
        return max(i for i, w in enumerate(weights) if w > 0)

    def shuffle(self, items: MutableSequence) -> None:
        """In-place Fisher-Yates, walking from the end."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> list[int]:
        idx = list(range(n))
        self.shuffle(idx)
        return idx

    def normal(self, size: int) -> np.ndarray:
        pairs = (size + 1) // 2
        words = self.raw(2 * pairs)
        u1 = ((words[0::2] >> np.uint64(11)).astype(np.float64) + 1.0) * _TWO_NEG_53
        u2 = (words[1::2] >> np.uint64(11)).astype(np.float64) * _TWO_NEG_53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        out = np.empty(2 * pairs)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:size]
