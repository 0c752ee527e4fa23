"""Shared oracles for the test suite.

These deliberately avoid the library's own grid logic wherever they serve
as an independent check: format grids are reconstructed by decoding every
bit pattern, and distributions are recomputed by brute-force enumeration.
"""

from __future__ import annotations

from fractions import Fraction

from srkit.formats import FloatFormat, SpecialValue, WorkingReal, decode_bits


def enumerate_finite_values(fmt: FloatFormat) -> list[WorkingReal]:
    """Every finite value of a small format, sorted ascending, via decode of
    all bit patterns (independent of the neighbor/grid code)."""
    out = []
    seen = set()
    for bits in range(1 << fmt.total_bits):
        try:
            v = decode_bits(fmt, bits)
        except Exception:
            continue
        if isinstance(v, SpecialValue):
            continue
        key = v.as_fraction()
        if key not in seen:
            seen.add(key)
            out.append(v)
    out.sort(key=lambda v: v.as_fraction())
    return out


def bracket(values: list[WorkingReal], x: Fraction):
    """Largest value <= x and smallest value >= x from a sorted list."""
    lo = max((v for v in values if v.as_fraction() <= x), key=lambda v: v.as_fraction())
    hi = min((v for v in values if v.as_fraction() >= x), key=lambda v: v.as_fraction())
    return lo, hi


class ListBits:
    """Finite scripted bit source for exercising lazy draws."""

    def __init__(self, bits: str):
        self._bits = [int(b) for b in bits]
        self._pos = 0
        self.bits_consumed = 0

    def next_bits(self, k: int) -> int:
        if self._pos + k > len(self._bits):
            raise RuntimeError("scripted bits exhausted")
        out = 0
        for _ in range(k):
            out = (out << 1) | self._bits[self._pos]
            self._pos += 1
        self.bits_consumed += k
        return out
