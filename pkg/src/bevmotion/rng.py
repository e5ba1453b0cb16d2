"""Counter-based splittable random streams.

Every stream is keyed by (seed, *key parts); draws are a pure function of
(key, counter), so per-entity streams can be created in any order — and on
any thread — with bit-identical results. All arithmetic is fixed-width
64-bit (SplitMix64 mixing), so sequences are reproducible across platforms.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3

# uint64 copies for the vectorized path.
_U_GOLDEN = np.uint64(_GOLDEN)
_U_MIX1 = np.uint64(_MIX1)
_U_MIX2 = np.uint64(_MIX2)

#: Scale turning the top 53 bits of a u64 into a double in [0, 1).
_INV_2_53 = 2.0**-53


def _mix(z: int) -> int:
    z = z & _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def _fnv1a(text: str) -> int:
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK
    return h


def _key_part(part) -> int:
    if isinstance(part, str):
        return _fnv1a(part)
    if isinstance(part, (int, np.integer)):
        return int(part) & _MASK
    raise TypeError(f"stream key parts must be int or str, got {type(part)!r}")


def stream_base(seed: int, *key) -> int:
    """Collapse (seed, *key) into the 64-bit base of a counter stream."""
    h = _mix((int(seed) & _MASK) ^ _GOLDEN)
    h = _mix((h + len(key)) & _MASK)
    for part in key:
        h = _mix((h + _GOLDEN) & _MASK ^ _key_part(part))
    return h


class Stream:
    """One independent random stream; stateless draws plus a convenience counter."""

    def __init__(self, seed: int, *key) -> None:
        self.base = stream_base(seed, *key)
        self._counter = 0

    def _word(self, index: int) -> int:
        return _mix((self.base + (index + 1) * _GOLDEN) & _MASK)

    def next_uint64(self) -> int:
        word = self._word(self._counter)
        self._counter += 1
        return word

    def next_float(self) -> float:
        """One double uniform in [0, 1)."""
        return (self.next_uint64() >> 11) * _INV_2_53

    def uniforms(self, n: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """n uniforms in [low, high), consuming n counter slots (vectorized)."""
        idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        z = self.base + idx * _U_GOLDEN  # wraps mod 2^64
        z = (z ^ (z >> np.uint64(30))) * _U_MIX1
        z = (z ^ (z >> np.uint64(27))) * _U_MIX2
        z = z ^ (z >> np.uint64(31))
        unit = (z >> np.uint64(11)).astype(np.float64) * _INV_2_53
        return low + unit * (high - low)

    def centered_uniforms(self, n: int) -> np.ndarray:
        """n uniforms strictly inside (-1/2, 1/2), for inverse-CDF sampling."""
        idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        z = self.base + idx * _U_GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _U_MIX1
        z = (z ^ (z >> np.uint64(27))) * _U_MIX2
        z = z ^ (z >> np.uint64(31))
        # Offset by half an ulp so 0 and 1 are unreachable, keeping the
        # Laplace inverse CDF finite.
        unit = ((z >> np.uint64(11)).astype(np.float64) + 0.5) * _INV_2_53
        return unit - 0.5

    def laplace(self, n: int, scale) -> np.ndarray:
        """n Laplace(0, scale) samples via the inverse CDF
        b * sign(u) * ln(1 - 2|u|) with u uniform on (-1/2, 1/2)."""
        u = self.centered_uniforms(n)
        return np.asarray(scale, dtype=float) * np.sign(u) * np.log(1.0 - 2.0 * np.abs(u))

    def integers(self, n: int, bound: int) -> np.ndarray:
        """n integers uniform in [0, bound) by 64-bit modular reduction.

        The modulo bias is below 2**-50 for any bound that fits desk-scale
        scenario generation.
        """
        idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        z = self.base + idx * _U_GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _U_MIX1
        z = (z ^ (z >> np.uint64(27))) * _U_MIX2
        z = z ^ (z >> np.uint64(31))
        return (z % np.uint64(bound)).astype(np.int64)
