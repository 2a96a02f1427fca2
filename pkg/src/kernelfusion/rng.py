"""Portable 64-bit pseudo random generator used for dataset splits and folds.

The generator is xorshift64* (Vigna, 2014) seeded through one round of
SplitMix64 so that every seed, including 0, gives a nonzero state::

    seed  -> state = splitmix64(seed)
    next():  x ^= x >> 12; x ^= x << 25; x ^= x >> 27
             return (x * 0x2545F4914F6CDD1D) mod 2**64

Bounded integers use bitmask rejection sampling on the top bits so the
output stream, and therefore every permutation, is identical on any platform
and in any language that follows these constants.
"""

MASK64 = (1 << 64) - 1
SPLITMIX_GAMMA = 0x9E3779B97F4A7C15
XORSHIFT_MULT = 0x2545F4914F6CDD1D


def splitmix64(value):
    z = (value + SPLITMIX_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class XorShift64Star:
    """xorshift64* generator with a SplitMix64-derived initial state."""

    def __init__(self, seed: int):
        if seed < 0:
            raise ValueError("seed must be an unsigned integer")
        self.state = splitmix64(seed & MASK64) or SPLITMIX_GAMMA

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & MASK64
        x ^= x >> 27
        self.state = x
        return (x * XORSHIFT_MULT) & MASK64

    def below(self, bound: int) -> int:
        """Uniform integer in ``[0, bound)`` by rejection on the masked top bits."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        if bound == 1:
            return 0
        bits = (bound - 1).bit_length()
        while True:
            candidate = self.next_u64() >> (64 - bits)
            if candidate < bound:
                return candidate

    def permutation(self, n: int) -> list:
        """Fisher-Yates shuffle of ``range(n)`` (Durstenfeld, descending)."""
        order = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.below(i + 1)
            order[i], order[j] = order[j], order[i]
        return order
