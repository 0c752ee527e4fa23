"""Reduced-precision binary floating-point number systems over exact dyadic reals.

Everything in this module is exact integer arithmetic.  A value is carried as
a ``WorkingReal`` (sign * m * 2**e with arbitrary-size m), which is closed
under addition, subtraction and multiplication, so rounding questions can be
answered with zero error.  A ``FloatFormat`` describes a target number system
by its precision and exponent range rather than by bit widths, so research
formats outside the standard zoo are expressible; the usual formats are
available as presets.

The central grid queries are ``neighbors`` (the two adjacent representable
values around x), ``round_up_fraction`` (the exact fractional position of x
between them, which is also the exact stochastic round-up probability) and
``ulp`` (the local grid spacing).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import NamedTuple, Union


class ParseError(ValueError):
    """Malformed numeric literal."""


class CapacityError(ValueError):
    """Literal would require an unreasonably large internal integer."""


class RangeOverflowError(ArithmeticError):
    """Magnitude beyond the format's largest finite value.

    Raised by the grid-level queries; saturation / round-to-infinity policy
    belongs to the rounding kernels and vendor profiles, never to this layer.
    """


class EncodingError(ValueError):
    """Value not representable in the requested format's bit layout."""


class DecodingError(ValueError):
    """Bit pattern with no defined meaning in the requested format."""


class DomainError(ValueError):
    """NaN or infinity where the destination format does not support it."""


class SpecialValue(Enum):
    """Non-finite values that exist only at the encode/decode/convert boundary."""

    NAN = "nan"
    POS_INF = "inf"
    NEG_INF = "-inf"

    @property
    def sign(self) -> int:
        return -1 if self is SpecialValue.NEG_INF else 1

    def __str__(self) -> str:
        return self.value


class WorkingReal:
    """Exact dyadic real ``sign * m * 2**e``.

    Canonical form: ``m`` is zero or odd, so every value has exactly one
    representation (zero keeps its sign so that signed zero survives encode /
    decode round trips).  Sums, differences and products of WorkingReal
    values are computed without error.  Instances are immutable by
    convention; nothing mutates them after construction.
    """

    __slots__ = ("sign", "m", "e")

    def __init__(self, sign: int, m: int, e: int = 0):
        if m < 0:
            raise ValueError("significand must be nonnegative; sign is carried separately")
        if m:
            tz = (m & -m).bit_length() - 1
            if tz:
                m >>= tz
                e += tz
        else:
            e = 0
        self.sign = 1 if sign >= 0 else -1
        self.m = m
        self.e = e

    # -- constructors --------------------------------------------------

    @classmethod
    def from_int(cls, n: int) -> "WorkingReal":
        return cls(1 if n >= 0 else -1, abs(n), 0)

    @classmethod
    def from_float(cls, x: float) -> "WorkingReal":
        num, den = x.as_integer_ratio()  # exact for any finite float
        sign = 1 if math.copysign(1.0, x) > 0 else -1
        return cls(sign, abs(num), -(den.bit_length() - 1))

    @classmethod
    def from_fraction(cls, f: Fraction) -> "WorkingReal":
        den = f.denominator
        if den & (den - 1):
            raise ValueError(f"{f} is not dyadic")
        return cls(1 if f >= 0 else -1, abs(f.numerator), -(den.bit_length() - 1))

    # -- views ----------------------------------------------------------

    def as_fraction(self) -> Fraction:
        n = self.sign * self.m
        if self.e >= 0:
            return Fraction(n << self.e)
        return Fraction(n, 1 << -self.e)

    def __float__(self) -> float:
        return float(self.as_fraction())

    @property
    def is_zero(self) -> bool:
        return self.m == 0

    # -- exact arithmetic ------------------------------------------------

    def __neg__(self) -> "WorkingReal":
        return WorkingReal(-self.sign, self.m, self.e)

    def __abs__(self) -> "WorkingReal":
        return WorkingReal(1, self.m, self.e)

    def scale2(self, k: int) -> "WorkingReal":
        """Exact multiplication by 2**k."""
        return WorkingReal(self.sign, self.m, self.e + k)

    def __add__(self, other: "WorkingReal") -> "WorkingReal":
        if not isinstance(other, WorkingReal):
            return NotImplemented
        if self.m == 0:
            return other if other.m else WorkingReal(1 if self.sign > 0 or other.sign > 0 else -1, 0, 0)
        if other.m == 0:
            return self
        e = min(self.e, other.e)
        n = (self.sign * self.m << (self.e - e)) + (other.sign * other.m << (other.e - e))
        return WorkingReal(1 if n >= 0 else -1, abs(n), e)

    def __sub__(self, other: "WorkingReal") -> "WorkingReal":
        return self.__add__(-other)

    def __mul__(self, other: "WorkingReal") -> "WorkingReal":
        if not isinstance(other, WorkingReal):
            return NotImplemented
        return WorkingReal(self.sign * other.sign, self.m * other.m, self.e + other.e)

    # -- comparisons (numeric: -0 == +0) ----------------------------------

    def _cmp(self, other: "WorkingReal") -> int:
        if self.m == 0 and other.m == 0:
            return 0
        s1 = self.sign if self.m else 0
        s2 = other.sign if other.m else 0
        if s1 != s2:
            return -1 if s1 < s2 else 1
        c = _cmp_mag(self.m, self.e, other.m, other.e)
        return c if s1 >= 0 else -c

    def __eq__(self, other) -> bool:
        if not isinstance(other, WorkingReal):
            return NotImplemented
        return self._cmp(other) == 0

    def __ne__(self, other) -> bool:
        if not isinstance(other, WorkingReal):
            return NotImplemented
        return self._cmp(other) != 0

    def __lt__(self, other):
        return self._cmp(other) < 0

    def __le__(self, other):
        return self._cmp(other) <= 0

    def __gt__(self, other):
        return self._cmp(other) > 0

    def __ge__(self, other):
        return self._cmp(other) >= 0

    def __hash__(self):
        return hash((self.m, self.e)) if self.m else hash(0)

    def __repr__(self):
        return f"WorkingReal({format_hex(self)!r})"

    def __str__(self):
        return format_hex(self)


def _cmp_mag(m1: int, e1: int, m2: int, e2: int) -> int:
    """Compare m1*2**e1 with m2*2**e2 (both nonnegative)."""
    if m1 == 0 or m2 == 0:
        return (m1 > 0) - (m2 > 0)
    b1 = e1 + m1.bit_length()
    b2 = e2 + m2.bit_length()
    if b1 != b2:
        return -1 if b1 < b2 else 1
    if e1 >= e2:
        m1 <<= e1 - e2
    else:
        m2 <<= e2 - e1
    return (m1 > m2) - (m1 < m2)


ZERO = WorkingReal(1, 0, 0)
ONE = WorkingReal(1, 1, 0)

FloatValue = Union[WorkingReal, SpecialValue]


@dataclass(frozen=True)
class FloatFormat:
    """A binary floating-point number system.

    ``precision_p`` counts significand bits including the implicit leading
    bit; ``emin``/``emax`` are the unbiased exponents of the smallest and
    largest normalized values.  ``exp_bits`` pins a concrete bit layout for
    encode/decode; formats without one are value grids only.

    When a format has NaN but no infinity (the e4m3 convention) the all-ones
    significand at the top exponent is reserved for NaN, which shrinks
    ``max_finite`` by one grid step.
    """

    name: str
    precision_p: int
    emin: int
    emax: int
    has_subnormals: bool = True
    has_infinity: bool = True
    has_nan: bool = True
    exp_bits: int | None = None

    def __post_init__(self):
        if self.precision_p < 1:
            raise ValueError("precision must be at least 1")
        if self.emin > self.emax:
            raise ValueError("emin must not exceed emax")
        c_max = (1 << self.precision_p) - 1
        if self.has_nan and not self.has_infinity and self.precision_p >= 2:
            c_max -= 1  # top code stolen for NaN
        # cached for the hot range check: max_finite = _max_c * 2**_max_e
        object.__setattr__(self, "_max_c", c_max)
        object.__setattr__(self, "_max_e", self.emax - self.precision_p + 1)

    @property
    def unit_roundoff(self) -> WorkingReal:
        return WorkingReal(1, 1, -self.precision_p)

    @property
    def max_finite(self) -> WorkingReal:
        return WorkingReal(1, self._max_c, self._max_e)

    @property
    def min_normal(self) -> WorkingReal:
        return WorkingReal(1, 1, self.emin)

    @property
    def min_subnormal(self) -> WorkingReal:
        if not self.has_subnormals:
            return self.min_normal
        return WorkingReal(1, 1, self.emin - self.precision_p + 1)

    @property
    def bias(self) -> int:
        return 1 - self.emin

    @property
    def total_bits(self) -> int | None:
        if self.exp_bits is None:
            return None
        return 1 + self.exp_bits + self.precision_p - 1

    def in_range(self, x: WorkingReal) -> bool:
        return _cmp_mag(x.m, x.e, self._max_c, self._max_e) <= 0

    def __str__(self):
        return self.name


# Preset number systems.  Exponent ranges follow IEEE 754 for the wide
# formats and the OCP definitions for the 8/6/4-bit ones (e4m3 keeps NaN but
# gives up infinity; the fp6/fp4 formats have neither).
PRESETS: dict[str, FloatFormat] = {
    "binary32": FloatFormat("binary32", 24, -126, 127, exp_bits=8),
    "binary16": FloatFormat("binary16", 11, -14, 15, exp_bits=5),
    "bfloat16": FloatFormat("bfloat16", 8, -126, 127, exp_bits=8),
    "fp8-e4m3": FloatFormat("fp8-e4m3", 4, -6, 8, has_infinity=False, exp_bits=4),
    "fp8-e5m2": FloatFormat("fp8-e5m2", 3, -14, 15, exp_bits=5),
    "fp6-e2m3": FloatFormat("fp6-e2m3", 4, 0, 2, has_infinity=False, has_nan=False, exp_bits=2),
    "fp6-e3m2": FloatFormat("fp6-e3m2", 3, -2, 4, has_infinity=False, has_nan=False, exp_bits=3),
    "fp4-e2m1": FloatFormat("fp4-e2m1", 2, 0, 2, has_infinity=False, has_nan=False, exp_bits=2),
    # power-of-two scale format used by microscaling block encodings; value
    # grid only (no sign bit, so the generic layout does not apply)
    "e8m0": FloatFormat("e8m0", 1, -127, 127, has_subnormals=False, has_infinity=False),
}

_ALIASES = {
    "fp32": "binary32", "f32": "binary32", "float32": "binary32",
    "fp16": "binary16", "f16": "binary16", "float16": "binary16", "half": "binary16",
    "bf16": "bfloat16",
    "e4m3": "fp8-e4m3", "e5m2": "fp8-e5m2",
    "e2m3": "fp6-e2m3", "e3m2": "fp6-e3m2", "e2m1": "fp4-e2m1",
}


def get_format(name: str) -> FloatFormat:
    key = name.strip().lower()
    key = _ALIASES.get(key, key)
    try:
        return PRESETS[key]
    except KeyError:
        raise KeyError(f"unknown format {name!r}; known: {', '.join(sorted(PRESETS))}") from None


BINARY32 = PRESETS["binary32"]
BINARY16 = PRESETS["binary16"]


class RoundingCandidates(NamedTuple):
    lo: WorkingReal
    hi: WorkingReal
    exact: bool


def _grid_split(fmt: FloatFormat, m: int, e: int):
    """Locate the positive magnitude m*2**e on fmt's grid.

    Returns ``(lo, hi, a, k)`` where lo <= m*2**e <= hi are adjacent grid
    values and the fractional position is exactly a/2**k (a == 0 means the
    value is on the grid, in which case lo is the value itself and hi is
    unset).  Since m is odd, a is odd too and a/2**k is already reduced.
    """
    if _cmp_mag(m, e, fmt._max_c, fmt._max_e) > 0:
        raise RangeOverflowError(
            f"magnitude exceeds max finite of {fmt.name}; saturation is a caller policy")
    top = e + m.bit_length() - 1
    if top >= fmt.emin:
        ge = top - fmt.precision_p + 1
    elif fmt.has_subnormals:
        ge = fmt.emin - fmt.precision_p + 1
    else:
        # gap between zero and the smallest normal
        return ZERO, WorkingReal(1, 1, fmt.emin), m, fmt.emin - e
    sh = ge - e
    if sh <= 0:
        return WorkingReal(1, m, e), None, 0, 0
    a = m & ((1 << sh) - 1)
    kf = m >> sh
    if a == 0:
        return WorkingReal(1, m, e), None, 0, 0
    return WorkingReal(1, kf, ge), WorkingReal(1, kf + 1, ge), a, sh


def neighbors(fmt: FloatFormat, x: WorkingReal) -> RoundingCandidates:
    """Grid-adjacent values below and above x, with an exactness flag.

    Correct across the subnormal/normal boundary and at zero.  Magnitudes
    beyond ``max_finite`` raise :class:`RangeOverflowError`.
    """
    if x.m == 0:
        return RoundingCandidates(x, x, True)
    lo, hi, a, _ = _grid_split(fmt, x.m, x.e)
    if a == 0:
        return RoundingCandidates(x, x, True)
    if x.sign < 0:
        return RoundingCandidates(-hi, -lo, False)
    return RoundingCandidates(lo, hi, False)


def round_up_fraction(fmt: FloatFormat, x: WorkingReal) -> Fraction:
    """Exact fractional position of x between its rounding candidates.

    This is the probability with which exact stochastic rounding returns the
    upper candidate.  Zero iff x is representable in fmt.  The denominator
    is always a power of two because x itself is dyadic.
    """
    if x.m == 0:
        return Fraction(0)
    _, _, a, k = _grid_split(fmt, x.m, x.e)
    if a == 0:
        return Fraction(0)
    if x.sign < 0:
        return Fraction((1 << k) - a, 1 << k)
    return Fraction(a, 1 << k)


def ulp(fmt: FloatFormat, x: WorkingReal) -> WorkingReal:
    """Grid spacing of fmt at x: 2**(E-p+1) for normalized magnitudes with
    top exponent E, the fixed subnormal spacing below the normal range."""
    if x.m == 0:
        return fmt.min_subnormal if fmt.has_subnormals else fmt.min_normal
    if not fmt.in_range(x):
        raise RangeOverflowError(f"magnitude exceeds max finite of {fmt.name}")
    top = x.e + x.m.bit_length() - 1
    if top < fmt.emin:
        return fmt.min_subnormal if fmt.has_subnormals else fmt.min_normal
    return WorkingReal(1, 1, top - fmt.precision_p + 1)


def is_representable(fmt: FloatFormat, x: WorkingReal) -> bool:
    if x.m == 0:
        return True
    if not fmt.in_range(x):
        return False
    _, _, a, _ = _grid_split(fmt, x.m, x.e)
    return a == 0


# ---------------------------------------------------------------------------
# bit-level encodings
# ---------------------------------------------------------------------------

def encode_bits(fmt: FloatFormat, x: FloatValue) -> int:
    """Pack a representable value into the format's sign/exponent/significand
    layout.  Signed zero, infinities and NaN encode per the format's flags;
    formats that keep NaN but drop infinity use the all-ones pattern at the
    top exponent for NaN."""
    w = fmt.exp_bits
    if w is None:
        raise EncodingError(f"{fmt.name} has no pinned bit layout")
    p = fmt.precision_p
    tbits = p - 1
    if isinstance(x, SpecialValue):
        if x is SpecialValue.NAN:
            if not fmt.has_nan:
                raise EncodingError(f"{fmt.name} has no NaN")
            if fmt.has_infinity:
                return (((1 << w) - 1) << tbits) | (1 << (tbits - 1))  # quiet bit
            return (((1 << w) - 1) << tbits) | ((1 << tbits) - 1)
        if not fmt.has_infinity:
            raise EncodingError(f"{fmt.name} has no infinity")
        s = 0 if x is SpecialValue.POS_INF else 1
        return (s << (w + tbits)) | (((1 << w) - 1) << tbits)
    s = 0 if x.sign > 0 else 1
    if x.m == 0:
        return s << (w + tbits)
    if not is_representable(fmt, x):
        raise EncodingError(f"{x} is not representable in {fmt.name}")
    top = x.e + x.m.bit_length() - 1
    if top >= fmt.emin:
        c = x.m << (x.e - (top - p + 1))
        biased = top + fmt.bias
        t = c - (1 << (p - 1))
    else:
        if not fmt.has_subnormals:
            raise EncodingError(f"{x} is subnormal but {fmt.name} has no subnormals")
        c = x.m << (x.e - (fmt.emin - p + 1))
        biased = 0
        t = c
    return (s << (w + tbits)) | (biased << tbits) | t


def decode_bits(fmt: FloatFormat, bits: int) -> FloatValue:
    """Inverse of :func:`encode_bits`; ``decode(encode(x)) == x``."""
    w = fmt.exp_bits
    if w is None:
        raise DecodingError(f"{fmt.name} has no pinned bit layout")
    p = fmt.precision_p
    tbits = p - 1
    total = 1 + w + tbits
    if bits < 0 or bits >> total:
        raise DecodingError(f"bit pattern 0x{bits:x} does not fit in {total} bits")
    s = -1 if (bits >> (w + tbits)) & 1 else 1
    biased = (bits >> tbits) & ((1 << w) - 1)
    t = bits & ((1 << tbits) - 1)
    top_code = (1 << w) - 1
    if biased == top_code:
        if fmt.has_infinity:
            if t == 0:
                return SpecialValue.POS_INF if s > 0 else SpecialValue.NEG_INF
            return SpecialValue.NAN
        if fmt.has_nan and t == (1 << tbits) - 1:
            return SpecialValue.NAN
    if biased == 0:
        if t == 0:
            return WorkingReal(s, 0, 0)
        if not fmt.has_subnormals:
            raise DecodingError(f"{fmt.name} has no subnormals")
        return WorkingReal(s, t, fmt.emin - p + 1)
    return WorkingReal(s, (1 << (p - 1)) + t, biased - fmt.bias - p + 1)


# ---------------------------------------------------------------------------
# text I/O
# ---------------------------------------------------------------------------

_HEX_RE = re.compile(r"^0x([0-9a-f]+)(?:\.([0-9a-f]*))?p([+-]?\d+)$", re.IGNORECASE)
_DEC_RE = re.compile(r"^(\d+(?:\.\d*)?|\.\d+)(?:e([+-]?\d+))?$", re.IGNORECASE)
_RAT_RE = re.compile(r"^(\d+)/(\d+)$")

_MAX_EXP_MAGNITUDE = 1_000_000  # guard against literals demanding absurd integers


class ParsedReal(NamedTuple):
    value: WorkingReal
    inexact: bool


def parse_working_real(text: str, decimal_working_bits: int = 200) -> ParsedReal:
    """Parse a hex-float, rational, or decimal literal to an exact dyadic.

    Hex-float (C99 style ``0x1.8p0``) and dyadic rationals convert exactly.
    Decimal literals and non-dyadic rationals are correctly rounded (round
    to nearest, ties to even) to ``decimal_working_bits`` significand bits
    and flagged ``inexact``, so any later claim of "exact" rounding refers
    to the parsed value, never to the literal.
    """
    if decimal_working_bits < 64:
        raise ValueError("working precision below 64 bits is not supported")
    s = text.strip()
    sign = 1
    if s and s[0] in "+-":
        if s[0] == "-":
            sign = -1
        s = s[1:]
    if not s:
        raise ParseError(f"empty numeric literal {text!r}")

    m = _HEX_RE.match(s)
    if m:
        ihex, fhex, pexp = m.group(1), m.group(2) or "", int(m.group(3))
        if abs(pexp) > _MAX_EXP_MAGNITUDE:
            raise CapacityError(f"binary exponent {pexp} out of supported range")
        mant = int(ihex + fhex, 16) if (ihex + fhex) else 0
        return ParsedReal(WorkingReal(sign, mant, pexp - 4 * len(fhex)), False)

    m = _RAT_RE.match(s)
    if m:
        num, den = int(m.group(1)), int(m.group(2))
        if den == 0:
            raise ParseError(f"zero denominator in {text!r}")
        return _from_rational(sign, num, den, decimal_working_bits)

    m = _DEC_RE.match(s)
    if m:
        digits, e10 = m.group(1), int(m.group(2) or 0)
        if "." in digits:
            ip, fp = digits.split(".")
            e10 -= len(fp)
            digits = (ip + fp) or "0"
        if abs(e10) > _MAX_EXP_MAGNITUDE or len(digits) > _MAX_EXP_MAGNITUDE:
            raise CapacityError(f"decimal exponent in {text!r} out of supported range")
        num = int(digits)
        if e10 >= 0:
            return _from_rational(sign, num * 10 ** e10, 1, decimal_working_bits)
        return _from_rational(sign, num, 10 ** (-e10), decimal_working_bits)

    raise ParseError(f"cannot parse numeric literal {text!r}")


def _from_rational(sign: int, num: int, den: int, bits: int) -> ParsedReal:
    if num == 0:
        return ParsedReal(WorkingReal(sign, 0, 0), False)
    g = Fraction(num, den)
    num, den = g.numerator, g.denominator
    if den & (den - 1) == 0:
        return ParsedReal(WorkingReal(sign, num, -(den.bit_length() - 1)), False)
    mant, e, inexact = _round_rational_to_bits(num, den, bits)
    return ParsedReal(WorkingReal(sign, mant, e), inexact)


def _round_rational_to_bits(num: int, den: int, bits: int):
    """Round positive num/den to `bits` significand bits, ties to even."""
    top = num.bit_length() - den.bit_length()
    if top >= 0:
        if num < den << top:
            top -= 1
    else:
        if (num << -top) < den:
            top -= 1
    shift = bits - 1 - top
    if shift >= 0:
        d = den
        q, rem = divmod(num << shift, d)
    else:
        d = den << -shift
        q, rem = divmod(num, d)
    if rem:
        twice = 2 * rem
        if twice > d or (twice == d and q & 1):
            q += 1
    # q may have carried to 2**bits; canonicalization absorbs it
    return q, top - bits + 1, rem != 0


def format_hex(x: WorkingReal, frac_hex_digits: int | None = None) -> str:
    """C99-style hex-float string ``[-]0x1.<frac>p<exp>`` (``0x0p+0`` for zero).

    The significand is always normalized to a leading 1, including for
    values that a format would store as subnormals; the string is exact
    either way.  ``frac_hex_digits`` pads the fraction (it can never
    truncate: exactness survives the text boundary).
    """
    sgn = "-" if x.sign < 0 else ""
    if x.m == 0:
        return sgn + "0x0p+0"
    bl = x.m.bit_length()
    top = x.e + bl - 1
    frac = x.m - (1 << (bl - 1))
    width = bl - 1
    ndig = (width + 3) // 4
    if frac_hex_digits is not None and frac_hex_digits > ndig:
        ndig = frac_hex_digits
    if ndig == 0:
        return f"{sgn}0x1p{top:+d}"
    frac <<= 4 * ndig - width
    return f"{sgn}0x1.{frac:0{ndig}x}p{top:+d}"


def format_decimal(x: WorkingReal, sig_digits: int = 17) -> str:
    """Decimal string with an explicit significant-digit count, correctly
    rounded (ties to even) from the exact value."""
    if sig_digits < 1:
        raise ValueError("need at least one significant digit")
    if x.m == 0:
        return "-0.0" if x.sign < 0 else "0.0"
    f = abs(x.as_fraction())
    # d10 = floor(log10(f)) by search around the bit-length estimate
    d10 = (f.numerator.bit_length() - f.denominator.bit_length()) * 30103 // 100000
    while 10 ** d10 <= f:
        d10 += 1
    d10 -= 1
    scale = sig_digits - 1 - d10
    scaled = f * Fraction(10) ** scale
    q, rem = divmod(scaled.numerator, scaled.denominator)
    if 2 * rem > scaled.denominator or (2 * rem == scaled.denominator and q & 1):
        q += 1
    digits = str(q)
    if len(digits) > sig_digits:  # rounding carried into a new decade
        digits = digits[:sig_digits]
        d10 += 1
    sgn = "-" if x.sign < 0 else ""
    if -4 <= d10 < sig_digits + 4:
        point = d10 + 1
        if point <= 0:
            return f"{sgn}0.{'0' * -point}{digits}".rstrip("0").rstrip(".") or sgn + "0"
        if point >= len(digits):
            return sgn + digits + "0" * (point - len(digits)) + ".0"
        return f"{sgn}{digits[:point]}.{digits[point:]}"
    mant = digits[0] + ("." + digits[1:] if len(digits) > 1 else ".0")
    return f"{sgn}{mant}e{d10:+d}"
