"""Deterministic pseudo-random streams for reproducible runs.

All randomness in the package flows from one integer seed through a
splitmix64 chain; independent purposes (weight init, validation split,
epoch shuffling) receive successive chain outputs as their own seeds.
The stream generator is xoshiro256**. Both algorithms are pinned below
so datasets, splits, and training histories can be reproduced
bit-for-bit by an independent implementation.

splitmix64, 64-bit wrapping arithmetic on state ``s``::

    s += 0x9E3779B97F4A7C15
    z = s
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    output = z ^ (z >> 31)

xoshiro256** on state ``(s0, s1, s2, s3)``, seeded from four successive
splitmix64 outputs::

    output = rotl64(s1 * 5, 7) * 9
    t = s1 << 17
    s2 ^= s0; s3 ^= s1; s1 ^= s2; s0 ^= s3
    s2 ^= t
    s3 = rotl64(s3, 45)

Derived quantities:

* float64 in [0, 1): ``(output >> 11) * 2**-53``
* float64 in (0, 1]: ``((output >> 11) + 1) * 2**-53``
* bounded integer below ``n``: mask ``output`` to the smallest
  power-of-two width covering ``n - 1`` and reject values ``>= n``
* standard normal pairs: Box-Muller transform
  ``sqrt(-2 ln u1) * (cos, sin)(2 pi u2)`` with ``u1`` drawn from (0, 1]
* shuffle: Fisher-Yates from the last index down, ``j = next_below(i+1)``
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1
_INV_2_53 = 2.0 ** -53


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state once; returns (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def derive_seeds(seed: int, count: int) -> list[int]:
    """First ``count`` outputs of the splitmix64 chain started at ``seed``.

    Sub-seed assignment is positional and documented at the call sites;
    reordering purposes would silently change every downstream stream.
    """
    state = seed & _MASK64
    out = []
    for _ in range(count):
        state, value = splitmix64(state)
        out.append(value)
    return out


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Xoshiro256(object):
    """xoshiro256** stream seeded through splitmix64."""

    def __init__(self, seed: int):
        state = seed & _MASK64
        s = []
        for _ in range(4):
            state, value = splitmix64(state)
            s.append(value)
        self._s = s
        self._spare_gauss: float | None = None

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def next_float(self) -> float:
        """Uniform float64 in [0, 1)."""
        return (self.next_u64() >> 11) * _INV_2_53

    def next_below(self, n: int) -> int:
        """Uniform integer in [0, n), unbiased via masked rejection."""
        if n <= 0:
            raise ValueError("bound must be positive")
        mask = (1 << (n - 1).bit_length()) - 1 if n > 1 else 0
        while True:
            value = self.next_u64() & mask
            if value < n:
                return value

    def next_gaussian(self) -> float:
        """Standard normal via Box-Muller; pairs are generated, one cached."""
        if self._spare_gauss is not None:
            value = self._spare_gauss
            self._spare_gauss = None
            return value
        u1 = ((self.next_u64() >> 11) + 1) * _INV_2_53
        u2 = (self.next_u64() >> 11) * _INV_2_53
        radius = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        self._spare_gauss = radius * math.sin(theta)
        return radius * math.cos(theta)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.next_below(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> list[int]:
        items = list(range(n))
        self.shuffle(items)
        return items
