"""Deterministic 64-bit primitives shared by both simulation engines.

The pure-Python and compiled engines must produce bit-identical traces, so
every piece of randomness and hashing used inside a simulation is pinned to
64-bit wraparound arithmetic defined here.
"""

MASK64 = (1 << 64) - 1

_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    """One SplitMix64 mixing step (finalizer included)."""
    x = (x + _GAMMA) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def hash64(seed: int, *vals: int) -> int:
    """Stateless keyed hash: fold each value through SplitMix64.

    Used for adversary decisions so that both engines derive identical
    pseudo-random choices regardless of evaluation order.
    """
    h = seed & MASK64
    for v in vals:
        h = splitmix64(h ^ (v & MASK64))
    return h


class Rng:
    """Small deterministic generator (SplitMix64 stream).

    Not cryptographic; used only for corpus generation and seeded searches.
    """

    def __init__(self, seed: int):
        self._state = seed & MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & MASK64
        x = self._state
        x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
        return x ^ (x >> 31)

    def randrange(self, n: int) -> int:
        if n <= 0:
            raise ValueError("randrange needs n >= 1")
        return self.next_u64() % n

    def choice(self, seq):
        return seq[self.randrange(len(seq))]

    def shuffle(self, seq) -> None:
        for i in range(len(seq) - 1, 0, -1):
            j = self.randrange(i + 1)
            seq[i], seq[j] = seq[j], seq[i]

    def sample_distinct(self, lo: int, hi: int, count: int) -> list:
        """count distinct integers drawn from [lo, hi), ascending draw order."""
        if hi - lo < count:
            raise ValueError("range too small for distinct sample")
        seen = set()
        out = []
        while len(out) < count:
            v = lo + self.randrange(hi - lo)
            if v not in seen:
                seen.add(v)
                out.append(v)
        return out


FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


def fnv1a_u64(h: int, v: int) -> int:
    """Fold one unsigned 64-bit value (little-endian bytes) into an FNV-1a hash."""
    v &= MASK64
    for i in range(8):
        h = ((h ^ ((v >> (8 * i)) & 0xFF)) * FNV_PRIME) & MASK64
    return h


def frac_ge(x: int, p: int, q: int, m: int) -> bool:
    """Exact test for x >= (p/q) * m over non-negative integers."""
    return q * x >= p * m


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)
