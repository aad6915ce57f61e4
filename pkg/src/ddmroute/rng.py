"""Portable 64-bit integer generators used for seeding and prompt shuffling.

Everything here works on plain Python ints masked to 64 bits so that the
same seed yields the same permutation on every platform and in any language
that reimplements these few lines:

* ``splitmix64`` (increment ``0x9E3779B97F4A7C15``) expands a user seed
  into a non-zero generator state and derives per-episode seeds.
* ``XorShift64Star`` (shifts 12/25/27, multiplier ``0x2545F4914F6CDD1D``)
  drives the Fisher-Yates shuffle.
"""

import secrets

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
XORSHIFT_MULTIPLIER = 0x2545F4914F6CDD1D


def splitmix64(x: int) -> int:
    """One splitmix64 step: advance ``x`` by the golden gamma and mix."""
    z = (x + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(base_seed: int, index: int) -> int:
    """Seed for stream ``index`` of a run seeded with ``base_seed``.

    Equals the ``index``-th output of a splitmix64 sequence started at
    ``base_seed``, so streams are decorrelated even for adjacent indices.
    """
    return splitmix64((base_seed + index * GOLDEN_GAMMA) & MASK64)


def draw_seed() -> int:
    return secrets.randbits(64)


def check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise TypeError(f"seed must be an int, got {type(seed).__name__}")
    if not 0 <= seed <= MASK64:
        raise ValueError(f"seed must fit in an unsigned 64-bit integer, got {seed}")
    return seed


class XorShift64Star:
    def __init__(self, seed: int):
        state = splitmix64(check_seed(seed))
        # all-zero state is a fixed point of xorshift
        self.state = state or GOLDEN_GAMMA

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & MASK64
        x ^= x >> 27
        self.state = x
        return (x * XORSHIFT_MULTIPLIER) & MASK64

    def below(self, bound: int) -> int:
        """Uniform integer in ``[0, bound)`` by rejection (no modulo bias)."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        threshold = (1 << 64) % bound
        while True:
            r = self.next_u64()
            if r >= threshold:
                return r % bound


def fisher_yates(items, seed: int) -> list:
    """Return a shuffled copy of ``items``; index ``i`` swaps with ``below(i + 1)``
    for ``i`` running from the last position down to 1."""
    out = list(items)
    gen = XorShift64Star(seed)
    for i in range(len(out) - 1, 0, -1):
        j = gen.below(i + 1)
        out[i], out[j] = out[j], out[i]
    return out
