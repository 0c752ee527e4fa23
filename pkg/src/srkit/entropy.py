"""Uniform random bit sources for stochastic rounding.

All sources are deterministic functions of their seed and single-owner: two
threads must not draw from the same source.  Parallel work derives one
stream per task with :func:`derive_stream`, which makes results independent
of scheduling.

Bit-consumption order is fixed and load-bearing for reproducibility: each
64-bit generator word is consumed high bits first, and ``next_bits(k)``
returns the next k stream bits with the first bit in the result's MSB.
"""

from __future__ import annotations

_M64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class EntropyError(RuntimeError):
    """A finite bit source was asked for more bits than it holds."""


def mix64(z: int) -> int:
    """SplitMix64 finalizer: avalanche-mixes a 64-bit word."""
    z &= _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


class BitSource:
    """Deterministic bit stream; subclasses supply 64-bit words."""

    def __init__(self):
        self._buf = 0
        self._nbuf = 0
        self.bits_consumed = 0

    def _next_word(self) -> int:
        raise NotImplementedError

    def next_bits(self, k: int) -> int:
        """The next k bits of the stream as an integer in [0, 2**k)."""
        if not 1 <= k <= 64:
            raise ValueError("bit count must be between 1 and 64")
        while self._nbuf < k:
            self._buf = (self._buf << 64) | self._next_word()
            self._nbuf += 64
        self._nbuf -= k
        out = self._buf >> self._nbuf
        self._buf &= (1 << self._nbuf) - 1
        self.bits_consumed += k
        return out


def _rotl(x: int, n: int) -> int:
    return ((x << n) | (x >> (64 - n))) & _M64


class Xoroshiro128Plus(BitSource):
    """xoroshiro128+ (Blackman/Vigna, version 1.0: rotations 24, 16, 37).

    The output word is s0 + s1, computed before the state update.  A single
    64-bit seed is expanded to the two state words with SplitMix64; the raw
    state can be set directly with :meth:`from_state`.
    """

    def __init__(self, seed: int = 0):
        super().__init__()
        sm = (seed + _GOLDEN) & _M64
        self._s0 = mix64(sm)
        sm = (sm + _GOLDEN) & _M64
        self._s1 = mix64(sm)
        if self._s0 == 0 and self._s1 == 0:
            self._s1 = 1

    @classmethod
    def from_state(cls, s0: int, s1: int) -> "Xoroshiro128Plus":
        if s0 == 0 and s1 == 0:
            raise ValueError("the all-zero state is invalid")
        src = cls.__new__(cls)
        BitSource.__init__(src)
        src._s0 = s0 & _M64
        src._s1 = s1 & _M64
        return src

    def _next_word(self) -> int:
        s0 = self._s0
        s1 = self._s1
        out = (s0 + s1) & _M64
        s1 ^= s0
        self._s0 = _rotl(s0, 24) ^ s1 ^ ((s1 << 16) & _M64)
        self._s1 = _rotl(s1, 37)
        return out


# Maximal-length feedback polynomials per register width (tap positions are
# 1-based, position `width` is the output end).
DEFAULT_TAPS: dict[int, tuple[int, ...]] = {
    3: (3, 2),
    4: (4, 3),
    5: (5, 3),
    6: (6, 5),
    7: (7, 6),
    8: (8, 6, 5, 4),
    12: (12, 11, 10, 4),
    16: (16, 15, 13, 4),
    24: (24, 23, 22, 17),
    32: (32, 22, 2, 1),
}


class Lfsr(BitSource):
    """Fibonacci linear-feedback shift register with configurable taps.

    Tap position n reads register bit ``(state >> (width - n)) & 1``; the
    feedback bit enters at position 1 and the bit shifted out of position
    ``width`` is the output.  Default taps are maximal-length polynomials,
    but any tap set including the width itself is accepted so that small
    research registers can be modelled.
    """

    def __init__(self, width: int, taps: tuple[int, ...] | None = None, seed: int = 1):
        super().__init__()
        if width < 2 or width > 64:
            raise ValueError("register width must be between 2 and 64")
        if taps is None:
            if width not in DEFAULT_TAPS:
                raise ValueError(f"no default taps for width {width}; pass taps explicitly")
            taps = DEFAULT_TAPS[width]
        if width not in taps:
            raise ValueError("tap set must include the register width")
        if any(t < 1 or t > width for t in taps):
            raise ValueError("tap positions must lie in [1, width]")
        self.width = width
        self.taps = tuple(sorted(set(taps), reverse=True))
        self._tapmask = 0
        for t in self.taps:
            self._tapmask |= 1 << (width - t)
        state = seed & ((1 << width) - 1)
        if state == 0:
            raise ValueError("the all-zero register never leaves zero")
        self._state = state

    def _next_word(self) -> int:
        s = self._state
        mask = self._tapmask
        top = self.width - 1
        w = 0
        for _ in range(64):
            w = (w << 1) | (s & 1)
            s = (s >> 1) | (((s & mask).bit_count() & 1) << top)
        self._state = s
        return w


class DataBits(BitSource):
    """Finite source backed by a fixed bit pattern, consumed high bits first.

    Models rounding randomness taken from the data being rounded: the same
    datum always yields the same bits, and the supply is exhausted after
    ``width`` bits."""

    def __init__(self, value: int, width: int):
        super().__init__()
        if width < 1:
            raise ValueError("datum width must be positive")
        if value < 0 or value >> width:
            raise ValueError("datum does not fit the stated width")
        self._value = value
        self._left = width
        self.width = width

    def next_bits(self, k: int) -> int:
        if not 1 <= k <= 64:
            raise ValueError("bit count must be between 1 and 64")
        if k > self._left:
            raise EntropyError(f"data-derived source exhausted ({self._left} bits left, {k} requested)")
        self._left -= k
        out = self._value >> self._left
        self._value &= (1 << self._left) - 1
        self.bits_consumed += k
        return out

    def _next_word(self) -> int:  # pragma: no cover - next_bits is overridden
        raise EntropyError("data-derived source exhausted")


class CounterSource(BitSource):
    """Counter-based stream: word i is the SplitMix64 output for state seed+i.

    Stateless up to the counter, so any word can be regenerated from its
    index; handy for position-seeded reproducible rounding."""

    def __init__(self, seed: int = 0):
        super().__init__()
        self._state = seed & _M64

    def _next_word(self) -> int:
        self._state = (self._state + _GOLDEN) & _M64
        return mix64(self._state)


def data_entropy(datum: int, width: int, k: int, scheme: str = "lsb") -> int:
    """Extract k random-looking bits from a datum's bit pattern.

    ``lsb`` returns the k least-significant bits (the datum must have at
    least k bits).  ``xor_fold`` partitions the datum into k-bit groups from
    the LSB end, zero-padding the last group, and XORs them.  Both are
    stateless: the same datum always gives the same bits.
    """
    if k < 1:
        raise ValueError("bit count must be positive")
    if datum < 0 or (width and datum >> width):
        raise ValueError("datum does not fit the stated width")
    if scheme == "lsb":
        if k > width:
            raise ValueError(f"datum has only {width} bits; {k} requested")
        return datum & ((1 << k) - 1)
    if scheme == "xor_fold":
        out = 0
        mask = (1 << k) - 1
        while datum:
            out ^= datum & mask
            datum >>= k
        return out
    raise ValueError(f"unknown data-entropy scheme {scheme!r}")


def derive_stream(global_seed: int, stream_id: int) -> Xoroshiro128Plus:
    """Deterministic per-task stream from a global seed and a stream id.

    The seed material is avalanche-mixed so that adjacent ids give unrelated
    streams; identical inputs give bit-identical streams, which makes
    parallel experiments reproducible independent of scheduling.
    """
    base = mix64((global_seed & _M64) ^ mix64((stream_id + _GOLDEN) & _M64))
    s0 = mix64((base + _GOLDEN) & _M64)
    s1 = mix64((base + 2 * _GOLDEN) & _M64)
    if s0 == 0 and s1 == 0:
        s1 = 1
    return Xoroshiro128Plus.from_state(s0, s1)
