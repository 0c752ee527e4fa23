import itertools
import random
from fractions import Fraction

import pytest

from srkit.entropy import derive_stream
from srkit.formats import WorkingReal, get_format, neighbors, round_up_fraction, ulp
from srkit.kernels import SrConfig, sr_limited
from srkit.oracle import (
    BudgetError,
    distribution,
    expected_sum_enumeration,
)

B16 = get_format("binary16")
ONE = WorkingReal(1, 1, 0)


def at_fraction(base, num, den_log2):
    u = ulp(B16, base)
    return base + WorkingReal(1, num, u.e - den_log2)


def test_exact_variant_is_analytic():
    x = at_fraction(ONE, 23, 5)
    rep = distribution(B16, x, SrConfig("exact"))
    assert rep.p_up == round_up_fraction(B16, x) == Fraction(23, 32)
    assert rep.bias == 0
    assert rep.mean == x.as_fraction()


def test_limited_truncate_q_eighth():
    x = at_fraction(ONE, 1, 3)
    rep = distribution(B16, x, SrConfig("limited", r=3))
    assert rep.p_up == Fraction(1, 8)
    assert rep.bias == 0
    assert rep.mean == rep.p_up * rep.hi.as_fraction() + (1 - rep.p_up) * rep.lo.as_fraction()


def test_limited_truncate_q_23_32():
    x = at_fraction(ONE, 23, 5)
    rep = distribution(B16, x, SrConfig("limited", r=3))
    assert rep.p_up == Fraction(5, 8)
    assert rep.bias == Fraction(-3, 32) * ulp(B16, ONE).as_fraction()


def test_exact_value_has_degenerate_distribution():
    rep = distribution(B16, ONE, SrConfig("limited", r=5))
    assert rep.p_up == 0 and rep.bias == 0 and rep.mean == 1


def test_floor_law_random_dyadics():
    # for positive x: P(up) = floor(2^r q) / 2^r; the magnitude-symmetric
    # kernels turn that into a ceiling for negative x
    rng = random.Random(21)
    for _ in range(200):
        x = WorkingReal(rng.choice([1, -1]), rng.randrange(1, 1 << 20), rng.randrange(-26, -8))
        qmag = round_up_fraction(B16, abs(x))
        for r in (1, 3, 5):
            rep = distribution(B16, x, SrConfig("limited", r=r))
            if qmag == 0:
                assert rep.p_up == 0
                continue
            floor_p = Fraction((qmag * (1 << r)).__floor__(), 1 << r)
            if x.sign > 0:
                assert rep.p_up == floor_p
            else:
                assert 1 - rep.p_up == floor_p  # P(down) carries the floor law


def test_p_up_monotone_in_q():
    last = Fraction(-1)
    for num in range(0, 32):
        x = at_fraction(ONE, num, 5) if num else ONE
        rep = distribution(B16, x, SrConfig("limited", r=3))
        assert rep.p_up >= last
        last = rep.p_up


def test_bias_zero_iff_scaled_q_integral():
    for num in range(1, 32):
        x = at_fraction(ONE, num, 5)
        q = Fraction(num, 32)
        for variant in ("limited", "a"):
            cfg = SrConfig(variant, r=3)
            rep = distribution(B16, x, cfg)
            integral = (q * 8).denominator == 1
            assert (rep.bias == 0) == integral


def test_budget_error():
    with pytest.raises(BudgetError):
        distribution(B16, at_fraction(ONE, 1, 3), SrConfig("limited", r=21))
    with pytest.raises(BudgetError):
        expected_sum_enumeration([ONE] * 7, B16, SrConfig("limited", r=4))


# ---------------------------------------------------------------------------
# expected-sum enumeration
# ---------------------------------------------------------------------------

def test_single_addend_matches_distribution_mean():
    x = at_fraction(ONE, 7, 4)
    cfg = SrConfig("limited", r=4)
    rep = expected_sum_enumeration([x], B16, cfg)
    assert rep.expected == distribution(B16, x, cfg).mean


def test_unbiased_when_partials_p_plus_r_representable():
    cfg = SrConfig("limited", r=4)
    addends = [ONE, WorkingReal(1, 3, -12), WorkingReal(1, 5, -12)]
    rep = expected_sum_enumeration(addends, B16, cfg)
    exact = Fraction(0)
    for a in addends:
        exact += a.as_fraction()
    assert rep.expected == exact
    assert rep.variance > 0  # the outcome is random even though the mean is exact


def test_dp_matches_literal_path_enumeration():
    # small case: walk every joint draw tuple through the kernel directly
    cfg = SrConfig("limited", r=2)
    addends = [at_fraction(ONE, 3, 4), WorkingReal(1, 5, -12)]
    rep = expected_sum_enumeration(addends, B16, cfg)
    total = Fraction(0)
    outcomes = {}
    for path in itertools.product(range(4), repeat=2):
        s = sr_limited(B16, addends[0], cfg, path[0])
        s = sr_limited(B16, s + addends[1], cfg, path[1])
        outcomes[s] = outcomes.get(s, Fraction(0)) + Fraction(1, 16)
        total += s.as_fraction()
    assert rep.expected == total / 16
    assert rep.outcomes == outcomes


def test_exact_sr_sum_is_unbiased_for_any_addends():
    cfg = SrConfig("exact")
    rng = random.Random(5)
    addends = [WorkingReal(1, rng.randrange(1, 1 << 14) * 2 + 1, -16) for _ in range(4)]
    rep = expected_sum_enumeration(addends, B16, cfg)
    assert rep.expected == sum(a.as_fraction() for a in addends)


def test_monte_carlo_agrees_within_4_sigma():
    cfg = SrConfig("limited", r=4)
    addends = [ONE, WorkingReal(1, 3, -12), WorkingReal(1, 5, -12)]
    rep = expected_sum_enumeration(addends, B16, cfg)
    trials = 20000
    stream = derive_stream(99, 0)
    acc = Fraction(0)
    for _ in range(trials):
        s = sr_limited(B16, addends[0], cfg, stream.next_bits(4))
        for a in addends[1:]:
            s = sr_limited(B16, s + a, cfg, stream.next_bits(4))
        acc += s.as_fraction()
    mc_mean = acc / trials
    sigma_mean = (float(rep.variance) / trials) ** 0.5
    assert abs(float(mc_mean - rep.expected)) <= 4 * sigma_mean


def test_distribution_handles_negative_values():
    x = -at_fraction(ONE, 23, 5)
    rep = distribution(B16, x, SrConfig("limited", r=3))
    pos = distribution(B16, -x, SrConfig("limited", r=3))
    assert rep.mean == -pos.mean
    assert rep.bias == -pos.bias
