"""Rounding kernels: deterministic modes, exact and limited-precision
stochastic rounding, the P3109 stochastic variants, exact-then-round
arithmetic, and the two-stage (round-to-binary32-first) scheme.

All kernels operate on the magnitude and reattach the sign, matching
significand-addition hardware; as a consequence the output distribution for
-x is exactly the negation of the distribution for x.  Every kernel output
is one of the two rounding candidates (or x itself when x is already
representable, in which case no randomness is consumed).

Kernels are pure given (x, config, draw).  Wrappers that draw from a bit
source require exclusive ownership of that source.
"""

from __future__ import annotations

from dataclasses import dataclass

from .entropy import BitSource
from .formats import (
    BINARY32,
    DomainError,
    FloatFormat,
    FloatValue,
    SpecialValue,
    WorkingReal,
    _grid_split,
)

RNE = "rne"
RZ = "rz"
RU = "ru"
RD = "rd"
DETERMINISTIC_MODES = (RNE, RZ, RU, RD)

MAX_RANDOM_BITS = 64  # one machine word; the widest documented hardware draw is 24

VARIANTS = ("exact", "limited", "a", "b", "c")


class ContractError(ValueError):
    """A random draw outside [0, 2**r), or an otherwise impossible argument."""


@dataclass(frozen=True)
class SrConfig:
    """Stochastic rounding variant descriptor.

    ``variant`` is one of ``exact`` (lazily drawn bits, exact round-up
    probability), ``limited`` (r random bits against an intermediate
    (p+r)-bit rounding of the value) or the P3109 variants ``a``/``b``/``c``.
    The intermediate rounding applies to ``limited`` only (``rz`` truncation
    by default, matching add-and-carry hardware); the P3109 variants imply
    their own and reject an explicit one.
    """

    variant: str
    r: int | None = None
    intermediate: str | None = None
    overflow: str = "saturate"  # or "infinity"
    flush_threshold: WorkingReal | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.variant == "exact":
            if self.r is not None:
                raise ValueError("exact stochastic rounding takes no random bit count")
            if self.intermediate is not None:
                raise ValueError("exact stochastic rounding has no intermediate rounding")
        else:
            if self.r is None or not 1 <= self.r <= MAX_RANDOM_BITS:
                raise ValueError(f"random bit count must be in [1, {MAX_RANDOM_BITS}]")
            if self.variant != "limited" and self.intermediate is not None:
                raise ValueError("the P3109 variants imply their intermediate rounding")
        if self.intermediate not in (None, RZ, RNE):
            raise ValueError("intermediate rounding must be 'rz' or 'rne'")
        if self.overflow not in ("saturate", "infinity"):
            raise ValueError("overflow policy must be 'saturate' or 'infinity'")

    @property
    def effective_intermediate(self) -> str:
        return self.intermediate or RZ


def _check_draw(r: int, draw: int) -> None:
    if not isinstance(draw, int) or draw < 0 or draw >> r:
        raise ContractError(f"draw {draw!r} outside [0, 2**{r})")


def _require_finite(x: FloatValue, fmt: FloatFormat) -> WorkingReal:
    if isinstance(x, SpecialValue):
        raise DomainError(f"kernel requires a finite value, got {x}")
    return x


# ---------------------------------------------------------------------------
# deterministic rounding
# ---------------------------------------------------------------------------

def round_deterministic(fmt: FloatFormat, x: FloatValue, mode: str = RNE) -> FloatValue:
    """Round x into fmt with a deterministic mode (rne, rz, ru, rd).

    Overflow follows the usual rules: nearest rounds to infinity past the
    midpoint beyond max finite when the format has infinities (saturating
    otherwise), and the directed modes go to the representable side or to
    the infinity they point at.
    """
    if mode not in DETERMINISTIC_MODES:
        raise ValueError(f"unknown rounding mode {mode!r}")
    if isinstance(x, SpecialValue):
        return _propagate_special(fmt, x)
    if x.m == 0:
        return x
    neg = x.sign < 0
    mag = abs(x) if neg else x
    if not fmt.in_range(mag):
        res = _overflow_deterministic(fmt, mode, neg, mag)
    else:
        lo, hi, a, k = _grid_split(fmt, mag.m, mag.e)
        if a == 0:
            res = lo
        elif mode == RZ:
            res = lo
        elif mode == RU:
            res = lo if neg else hi
        elif mode == RD:
            res = hi if neg else lo
        else:
            half = 1 << (k - 1)
            if a > half:
                res = hi
            elif a < half:
                res = lo
            elif lo.is_zero:
                res = lo
            else:
                # exact tie: even grid index wins.  Candidates are consecutive
                # multiples of the grid step, so the even one is exactly the
                # one whose canonical exponent exceeds the step exponent.
                res = lo if lo.e > hi.e else hi
    if isinstance(res, SpecialValue):
        return res
    return -res if neg else res


def _overflow_deterministic(fmt, mode, neg, mag):
    if mode == RZ or (mode == RU and neg) or (mode == RD and not neg):
        return fmt.max_finite
    if mode == RNE:
        if not fmt.has_infinity:
            return fmt.max_finite
        # beyond max_finite + half a top-binade step, nearest is infinity;
        # at exactly the midpoint the even neighbour is the power of two above
        boundary = fmt.max_finite + WorkingReal(1, 1, fmt.emax - fmt.precision_p)
        if mag >= boundary:
            return SpecialValue.NEG_INF if neg else SpecialValue.POS_INF
        return fmt.max_finite
    # directed away from zero
    if fmt.has_infinity:
        return SpecialValue.NEG_INF if neg else SpecialValue.POS_INF
    return fmt.max_finite


def _propagate_special(fmt: FloatFormat, x: SpecialValue) -> SpecialValue:
    if x is SpecialValue.NAN:
        if fmt.has_nan:
            return x
        raise DomainError(f"{fmt.name} cannot represent NaN")
    if fmt.has_infinity:
        return x
    raise DomainError(f"{fmt.name} cannot represent infinities")


# ---------------------------------------------------------------------------
# stochastic kernels
# ---------------------------------------------------------------------------

def sr_exact(fmt: FloatFormat, x: FloatValue, bits: BitSource) -> WorkingReal:
    """Exact stochastic rounding: return the upper candidate with probability
    equal to x's exact fractional position between the candidates.

    Representable x returns immediately and consumes no bits.  Otherwise the
    comparison of a lazily drawn uniform U in [0,1) against the (dyadic)
    fraction q is resolved bit by bit, drawing only until it resolves: a
    drawn bit below q's next bit settles on the upper candidate, above on
    the lower, and once q's bits are exhausted U >= q is certain.
    """
    x = _require_finite(x, fmt)
    if x.m == 0:
        return x
    mag = abs(x)
    lo, hi, a, k = _grid_split(fmt, mag.m, mag.e)
    if a == 0:
        return x
    up = False
    for i in range(k - 1, -1, -1):
        u = bits.next_bits(1)
        qbit = (a >> i) & 1
        if u < qbit:
            up = True
            break
        if u > qbit:
            break
    res = hi if up else lo
    return -res if x.sign < 0 else res


def sr_limited(fmt: FloatFormat, x: FloatValue, cfg: SrConfig, draw: int) -> WorkingReal:
    """Limited-precision stochastic rounding with r random bits.

    Equivalent to exact SR applied to the value first rounded to p+r bits
    with the configured intermediate rounding.  Concretely: take t, the r
    bits of the magnitude immediately below the destination spacing (after
    intermediate rounding at position p+r), and return the upper candidate
    iff t + draw >= 2**r.  Representable x returns x for every draw.
    """
    if cfg.variant != "limited":
        raise ContractError(f"sr_limited needs a 'limited' config, got {cfg.variant!r}")
    x = _require_finite(x, fmt)
    r = cfg.r
    _check_draw(r, draw)
    if x.m == 0:
        return x
    mag = abs(x)
    lo, hi, a, k = _grid_split(fmt, mag.m, mag.e)
    if a == 0:
        return x
    t = _scaled_fraction(a, k, r, cfg.effective_intermediate)
    if t >= (1 << r):  # intermediate rounding carried into the upper candidate
        res = hi
    else:
        res = hi if t + draw >= (1 << r) else lo
    return -res if x.sign < 0 else res


def _scaled_fraction(a: int, k: int, r: int, intermediate: str) -> int:
    """Round the fraction a/2**k, scaled by 2**r, to an integer."""
    if k <= r:
        return a << (r - k)
    sh = k - r
    t = a >> sh
    if intermediate == RNE:
        rem = a & ((1 << sh) - 1)
        half = 1 << (sh - 1)
        if rem > half or (rem == half and t & 1):
            t += 1
    return t


def p3109_round(fmt: FloatFormat, x: FloatValue, variant: str, r: int, draw: int) -> WorkingReal:
    """The three P3109 stochastic variants, driven by the exact fraction q.

    * a: round up iff floor(2**r * q) + draw >= 2**r
    * b: with j = floor(2**(r+1) * q), round up iff j + 2*draw + 1 >= 2**(r+1)
      (midpoint test over 2**(r+1) subintervals; exactly unbiased whenever q
      is a multiple of 2**-(r+1), worst-case bias half that of variant a)
    * c: round up iff rne(2**r * q) + draw >= 2**r, ties of the nearest
      rounding going to even

    Representable x returns x for every draw in every variant.
    """
    if variant not in ("a", "b", "c"):
        raise ContractError(f"unknown P3109 variant {variant!r}")
    if not 1 <= r <= MAX_RANDOM_BITS:
        raise ContractError(f"random bit count must be in [1, {MAX_RANDOM_BITS}]")
    x = _require_finite(x, fmt)
    _check_draw(r, draw)
    if x.m == 0:
        return x
    mag = abs(x)
    lo, hi, a, k = _grid_split(fmt, mag.m, mag.e)
    if a == 0:
        return x
    # q = a / 2**k exactly; scalings below are exact integer arithmetic
    if variant == "a":
        t = (a << r) >> k
        up = t + draw >= (1 << r)
    elif variant == "b":
        j = (a << (r + 1)) >> k
        up = j + 2 * draw + 1 >= (1 << (r + 1))
    else:
        num = a << r
        t, rem = num >> k, num & ((1 << k) - 1)
        if k and rem:
            half = 1 << (k - 1)
            if rem > half or (rem == half and t & 1):
                t += 1
        up = t + draw >= (1 << r)
    res = hi if up else lo
    return -res if x.sign < 0 else res


def stochastic_round(fmt: FloatFormat, x: FloatValue, cfg: SrConfig, entropy: BitSource) -> FloatValue:
    """Round x into fmt per cfg, drawing what the variant needs from entropy.

    This is the policy-aware entry point: it propagates NaN/infinity when
    the destination supports them, flushes magnitudes below the configured
    threshold to signed zero, and applies the overflow policy (saturate to
    max finite by default, or round to infinity when the format has one).
    """
    if isinstance(x, SpecialValue):
        return _propagate_special(fmt, x)
    y = _apply_range_policy(fmt, x, cfg)
    if y is not x:
        return y
    if cfg.variant == "exact":
        return sr_exact(fmt, x, bits=entropy)
    draw = entropy.next_bits(cfg.r)
    if cfg.variant == "limited":
        return sr_limited(fmt, x, cfg, draw)
    return p3109_round(fmt, x, cfg.variant, cfg.r, draw)


def _apply_range_policy(fmt: FloatFormat, x: WorkingReal, cfg: SrConfig):
    """Flush / overflow handling shared by the entropy-consuming wrappers.

    Returns x unchanged when it is in range, otherwise the policy result.
    """
    if x.m == 0:
        return x
    thr = cfg.flush_threshold
    if thr is not None and abs(x) < thr:
        return WorkingReal(x.sign, 0, 0)
    if not fmt.in_range(x):
        if cfg.overflow == "infinity" and fmt.has_infinity:
            return SpecialValue.POS_INF if x.sign > 0 else SpecialValue.NEG_INF
        mx = fmt.max_finite
        return -mx if x.sign < 0 else mx
    return x


# ---------------------------------------------------------------------------
# composed operations
# ---------------------------------------------------------------------------

_EXACT_OPS = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
}


def exact_op_then_round(op: str, a: WorkingReal, b: WorkingReal, fmt: FloatFormat,
                        rounding, entropy: BitSource | None = None) -> FloatValue:
    """Compute a op b without error, then round once into fmt.

    The closed arithmetic makes this the model in which rounding applies
    only to the final projection of an exactly computed result.  ``rounding``
    is a deterministic mode string or an :class:`SrConfig`; stochastic
    configs draw from ``entropy``.
    """
    try:
        result = _EXACT_OPS[op](a, b)
    except KeyError:
        raise ValueError(f"unknown operation {op!r}; expected add, sub or mul") from None
    return round_any(fmt, result, rounding, entropy)


def round_any(fmt: FloatFormat, x: FloatValue, rounding, entropy: BitSource | None = None) -> FloatValue:
    """Dispatch to a deterministic mode or a stochastic config."""
    if isinstance(rounding, SrConfig):
        if entropy is None:
            raise ContractError("stochastic rounding requires an entropy source")
        return stochastic_round(fmt, x, rounding, entropy)
    return round_deterministic(fmt, x, rounding)


def two_stage_round(x: FloatValue, dst_fmt: FloatFormat, cfg: SrConfig,
                    entropy: BitSource) -> FloatValue:
    """Round to binary32 with nearest-even first, then stochastically into
    the destination.

    This mirrors hardware that always materializes a binary32 intermediate:
    the result is distributed as SR applied to the binary32 rounding of x,
    which differs from single-stage SR whenever that first rounding moves x
    across the destination grid.
    """
    y = round_deterministic(BINARY32, x, RNE)
    if isinstance(y, SpecialValue):
        return _propagate_special(dst_fmt, y)
    return stochastic_round(dst_fmt, y, cfg, entropy)
