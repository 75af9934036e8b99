"""Deterministic 64-bit random streams.

Every stochastic routine in the package draws from xoshiro256++ streams
seeded through splitmix64.  A replica stream is a pure function of
(master seed, replica index), so results never depend on scheduling or
on how many worker processes participate.  The compiled engine carries
a C copy of the same generator; outputs are bit-identical.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _scramble(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state; return (new_state, output)."""
    state = (state + _GOLDEN) & _MASK
    return state, _scramble(state)


def mix64(*keys: int) -> int:
    """Fold integer keys into one 64-bit value.

    Used to derive stream seeds for replicas, percolation edges and
    block-field cells: mix64(master_seed, k1, k2, ...).  Negative keys
    are reduced mod 2**64 first.
    """
    h = 0x243F6A8885A308D3
    for k in keys:
        h = _scramble((h ^ (k & _MASK)) + _GOLDEN)
    return h


def uniform_from_key(*keys: int) -> float:
    """One deterministic uniform in [0, 1) addressed purely by keys."""
    return (mix64(*keys) >> 11) * 2.0**-53


class Xoshiro256PP:
    """xoshiro256++ with splitmix64 seeding (Blackman & Vigna)."""

    __slots__ = ("s0", "s1", "s2", "s3")

    def __init__(self, seed: int):
        state = seed & _MASK
        state, self.s0 = splitmix64(state)
        state, self.s1 = splitmix64(state)
        state, self.s2 = splitmix64(state)
        state, self.s3 = splitmix64(state)

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self.s0, self.s1, self.s2, self.s3
        t = (s0 + s3) & _MASK
        result = ((((t << 23) & _MASK) | (t >> 41)) + s0) & _MASK
        t = (s1 << 17) & _MASK
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = ((s3 << 45) | (s3 >> 19)) & _MASK
        self.s0, self.s1, self.s2, self.s3 = s0, s1, s2, s3
        return result

    def next_double(self) -> float:
        """Uniform in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def state(self) -> tuple[int, int, int, int]:
        return (self.s0, self.s1, self.s2, self.s3)


def replica_stream(master_seed: int, replica_index: int) -> Xoshiro256PP:
    """The stream owned by one replica; independent of all others."""
    return Xoshiro256PP(mix64(master_seed, replica_index))


def xoshiro_init(seed: int) -> list:
    """Generator state as a mutable 4-lane list (engine-style API).

    Same seeding and update rule as Xoshiro256PP; the list form mirrors
    the C struct used by the compiled engine.
    """
    state = seed & _MASK
    lanes = []
    for _ in range(4):
        state, out = splitmix64(state)
        lanes.append(out)
    return lanes


def xoshiro_next_double(s: list) -> float:
    """Advance a 4-lane state in place; uniform in [0, 1)."""
    s0, s1, s2, s3 = s
    t = (s0 + s3) & _MASK
    result = ((((t << 23) & _MASK) | (t >> 41)) + s0) & _MASK
    t = (s1 << 17) & _MASK
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = ((s3 << 45) | (s3 >> 19)) & _MASK
    s[0] = s0
    s[1] = s1
    s[2] = s2
    s[3] = s3
    return (result >> 11) * 2.0**-53
