"""Exhaustive ground truth for rounding distributions.

Everything here is integer/rational arithmetic; there is no floating point
anywhere in this module, so re-running at any "higher precision" cannot
change a digit.  The fixed-width variants are characterized by enumerating
every possible random draw and executing the real kernel for each one; the
exact variant is analytic.  Enumeration budgets are sized for sub-second
desk-scale runs and fail loudly instead of silently sampling.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .formats import FloatFormat, WorkingReal, neighbors, round_up_fraction
from .kernels import SrConfig, p3109_round, sr_limited

MAX_ENUM_R = 20          # 2**r single-value enumeration budget
MAX_SUM_DRAW_BITS = 24   # n*r budget for joint summation paths


class BudgetError(ValueError):
    """Request beyond the exhaustive-enumeration budget."""


@dataclass(frozen=True)
class DistributionReport:
    """Exact distribution of one rounding step.

    ``mean`` is p_up * hi + (1 - p_up) * lo and ``bias`` is mean - x, all as
    exact rationals.
    """

    p_up: Fraction
    mean: Fraction
    bias: Fraction
    lo: WorkingReal
    hi: WorkingReal
    r_used: int | None
    variant: str


def distribution(fmt: FloatFormat, x: WorkingReal, cfg: SrConfig) -> DistributionReport:
    """Exact round-up probability, mean and bias of cfg applied to x.

    Fixed-width variants enumerate all 2**r draws through the actual kernel;
    the exact variant's probability is the exact fractional position of x.
    """
    cand = neighbors(fmt, x)
    xf = x.as_fraction()
    if cand.exact:
        return DistributionReport(Fraction(0), xf, Fraction(0), x, x, cfg.r, cfg.variant)
    if cfg.variant == "exact":
        q = round_up_fraction(fmt, x)
        return DistributionReport(q, xf, Fraction(0), cand.lo, cand.hi, None, "exact")
    r = cfg.r
    if r > MAX_ENUM_R:
        raise BudgetError(f"enumeration of 2**{r} draws exceeds the r <= {MAX_ENUM_R} budget")
    hi = cand.hi
    if cfg.variant == "limited":
        ups = sum(1 for draw in range(1 << r) if sr_limited(fmt, x, cfg, draw) == hi)
    else:
        ups = sum(1 for draw in range(1 << r)
                  if p3109_round(fmt, x, cfg.variant, r, draw) == hi)
    p_up = Fraction(ups, 1 << r)
    mean = p_up * hi.as_fraction() + (1 - p_up) * cand.lo.as_fraction()
    return DistributionReport(p_up, mean, mean - xf, cand.lo, hi, r, cfg.variant)


@dataclass(frozen=True)
class ExpectedSumReport:
    """Exact law of the final value of a recursively rounded summation."""

    expected: Fraction
    variance: Fraction
    outcomes: dict[WorkingReal, Fraction]
    n: int


def expected_sum_enumeration(addends, fmt: FloatFormat, cfg: SrConfig) -> ExpectedSumReport:
    """Exact expectation of rounding-as-you-go summation over all draw paths.

    The first addend is rounded, then each subsequent addend is added
    without error and the partial sum rounded again, with an independent
    draw at every step.  The joint enumeration is folded through the exact
    per-step law, which weights every one of the 2**(n*r) draw paths.
    """
    addends = list(addends)
    n = len(addends)
    if n == 0:
        raise ValueError("need at least one addend")
    if cfg.variant != "exact":
        if n * cfg.r > MAX_SUM_DRAW_BITS:
            raise BudgetError(
                f"{n} steps at {cfg.r} bits is 2**{n * cfg.r} joint paths; "
                f"budget is n*r <= {MAX_SUM_DRAW_BITS}")

    states: dict[WorkingReal, Fraction] = {}
    first = distribution(fmt, addends[0], cfg)
    _accumulate(states, first)
    for a in addends[1:]:
        nxt: dict[WorkingReal, Fraction] = {}
        for s, prob in states.items():
            rep = distribution(fmt, s + a, cfg)
            _accumulate(nxt, rep, prob)
        states = nxt

    expected = Fraction(0)
    for value, prob in states.items():
        expected += prob * value.as_fraction()
    variance = Fraction(0)
    for value, prob in states.items():
        d = value.as_fraction() - expected
        variance += prob * d * d
    return ExpectedSumReport(expected, variance, states, n)


def _accumulate(states: dict, rep: DistributionReport, scale: Fraction = Fraction(1)) -> None:
    if rep.p_up:
        states[rep.hi] = states.get(rep.hi, Fraction(0)) + scale * rep.p_up
    down = 1 - rep.p_up
    if down:
        states[rep.lo] = states.get(rep.lo, Fraction(0)) + scale * down
