"""Deterministic 64-bit mixing generator.

All randomized construction in this package goes through :class:`MixRng` so
that a seed reproduces the same instance bit-for-bit on any platform or
implementation. The generator is fully specified:

State update (64-bit wrapping arithmetic)::

    state <- (state + 0x9E3779B97F4A7C15) mod 2^64

Output function applied to the updated state::

    z = state
    z = (z XOR (z >> 30)) * 0xBF58476D1CE4E5B9   mod 2^64
    z = (z XOR (z >> 27)) * 0x94D049BB133111EB   mod 2^64
    z = z XOR (z >> 31)

Derived draws:

* ``uniform()`` returns ``((z >> 11) + 0.5) * 2^-53``, a double in the open
  interval (0, 1).
* ``randint(lo, hi)`` returns ``lo + z mod (hi - lo + 1)`` (inclusive ends).
* ``sample(n, k)`` runs a partial Fisher-Yates shuffle of ``range(n)``:
  for ``i = 0 .. k-1`` swap position ``i`` with ``randint(i, n-1)``; the
  first ``k`` entries are the sample.
* ``mix(a, b)`` is the output function applied once to
  ``(a XOR (b * 0x9E3779B97F4A7C15 mod 2^64)) + 0x9E3779B97F4A7C15``.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _finalize(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def mix(a: int, b: int) -> int:
    """Combine two 64-bit values into a derived seed."""
    z = ((a & _MASK) ^ ((b * _GAMMA) & _MASK)) & _MASK
    return _finalize((z + _GAMMA) & _MASK)


class MixRng:
    """Counter-based generator with the documented state/output functions."""

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK
        return _finalize(self._state)

    def uniform(self) -> float:
        """Double uniform on the open interval (0, 1)."""
        return ((self.next_u64() >> 11) + 0.5) * 2.0**-53

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi], both ends inclusive."""
        if hi < lo:
            raise ValueError("empty range")
        return lo + self.next_u64() % (hi - lo + 1)

    def sample(self, n: int, k: int) -> list[int]:
        """k distinct indices from range(n) by partial Fisher-Yates."""
        if not 0 <= k <= n:
            raise ValueError("sample size out of range")
        arr = list(range(n))
        for i in range(k):
            j = self.randint(i, n - 1)
            arr[i], arr[j] = arr[j], arr[i]
        return arr[:k]
