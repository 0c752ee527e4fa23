import math

import pytest

from srkit.entropy import (
    DEFAULT_TAPS,
    CounterSource,
    DataBits,
    EntropyError,
    Lfsr,
    Xoroshiro128Plus,
    data_entropy,
    derive_stream,
    mix64,
)

M64 = (1 << 64) - 1


def _reference_xoroshiro(s0, s1, n):
    """Straight transliteration of the published update, kept separate from
    the library implementation as a cross-check."""
    def rotl(x, k):
        return ((x << k) | (x >> (64 - k))) & M64
    out = []
    for _ in range(n):
        out.append((s0 + s1) & M64)
        s1 ^= s0
        s0 = rotl(s0, 24) ^ s1 ^ ((s1 << 16) & M64)
        s1 = rotl(s1, 37)
    return out


def test_xoroshiro_first_words_from_known_state():
    g = Xoroshiro128Plus.from_state(1, 2)
    assert g.next_bits(64) == 3
    # second word, stepped by hand: s1^=s0 -> 3; s0' = rotl(1,24)^3^(3<<16)
    # = 0x1030003; s1' = rotl(3,37) = 0x6000000000; sum = 0x6001030003
    assert g.next_bits(64) == 0x6001030003


def test_xoroshiro_matches_reference_transliteration():
    g = Xoroshiro128Plus.from_state(0xDEADBEEF, 0x12345678)
    ref = _reference_xoroshiro(0xDEADBEEF, 0x12345678, 100)
    assert [g.next_bits(64) for _ in range(100)] == ref


def test_seeded_constructor_deterministic_and_nonzero():
    a = Xoroshiro128Plus(123)
    b = Xoroshiro128Plus(123)
    assert [a.next_bits(64) for _ in range(4)] == [b.next_bits(64) for _ in range(4)]
    with pytest.raises(ValueError):
        Xoroshiro128Plus.from_state(0, 0)


def test_next_bits_high_bits_first():
    g = Xoroshiro128Plus(99)
    word = Xoroshiro128Plus(99).next_bits(64)
    assert g.next_bits(8) == word >> 56
    assert g.next_bits(8) == (word >> 48) & 0xFF


def test_next_bits_chunking_is_stream_consistent():
    a = Xoroshiro128Plus(5)
    b = Xoroshiro128Plus(5)
    bits_a = "".join(str(a.next_bits(1)) for _ in range(130))
    acc = (b.next_bits(40) << 90) | (b.next_bits(40) << 50) | (b.next_bits(50))
    assert int(bits_a, 2) == acc
    assert a.bits_consumed == b.bits_consumed == 130


def test_next_bits_rejects_bad_counts():
    g = Xoroshiro128Plus(0)
    for k in (0, -1, 65):
        with pytest.raises(ValueError):
            g.next_bits(k)
    assert Xoroshiro128Plus(0).next_bits(1) in (0, 1)


# ---------------------------------------------------------------------------
# LFSR
# ---------------------------------------------------------------------------

def test_lfsr_matches_hand_stepped_register():
    # width 8, taps 8/6/5/4 (x^8 + x^6 + x^5 + x^4 + 1), seed 0x01.
    # Step by hand: output the LSB, feedback = parity of tapped bits
    # (positions n read bit width-n), insert at the MSB.
    state = 0x01
    expected = []
    for _ in range(16):
        fb = ((state & 1) ^ ((state >> 2) & 1) ^ ((state >> 3) & 1) ^ ((state >> 4) & 1))
        expected.append(state & 1)
        state = (state >> 1) | (fb << 7)
    src = Lfsr(8, (8, 6, 5, 4), seed=0x01)
    got = [src.next_bits(1) for _ in range(16)]
    assert got == expected
    assert expected[:8] == [1, 0, 0, 0, 0, 0, 0, 0]


def test_lfsr_default_taps_width16_are_maximal_length():
    # step the recurrence directly: a maximal 16-bit register returns to its
    # seed state after exactly 2**16 - 1 steps
    mask = 0
    for t in DEFAULT_TAPS[16]:
        mask |= 1 << (16 - t)
    state = 1
    period = 0
    while True:
        state = (state >> 1) | (((state & mask).bit_count() & 1) << 15)
        period += 1
        if state == 1:
            break
        assert period <= 1 << 16
    assert period == 65535


def test_lfsr_validation():
    with pytest.raises(ValueError):
        Lfsr(8, seed=0)
    with pytest.raises(ValueError):
        Lfsr(8, (6, 5, 4))  # must include the width
    with pytest.raises(ValueError):
        Lfsr(9)  # no default taps
    Lfsr(3, seed=5)  # default taps exist


# ---------------------------------------------------------------------------
# uniformity smoke test
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("make", [
    lambda: Xoroshiro128Plus(2024),
    lambda: Lfsr(16, seed=0xACE1),
], ids=["xoroshiro", "lfsr16"])
def test_uniformity_smoke_byte_frequencies(make):
    src = make()
    n = 10**6
    counts = [0] * 256
    nb = src.next_bits
    for _ in range(n):
        counts[nb(8)] += 1
    p = 1 / 256
    sigma = math.sqrt(n * p * (1 - p))
    mean = n * p
    worst = max(abs(c - mean) for c in counts)
    assert worst < 5 * sigma, f"worst byte deviation {worst:.1f} vs 5 sigma {5*sigma:.1f}"


# ---------------------------------------------------------------------------
# data-derived bits
# ---------------------------------------------------------------------------

def test_data_entropy_lsb():
    assert data_entropy(0b1001101, 7, 3, "lsb") == 0b101
    with pytest.raises(ValueError):
        data_entropy(0b101, 3, 4, "lsb")


def test_data_entropy_xor_fold():
    assert data_entropy(0xFF00, 16, 8, "xor_fold") == 0xFF
    assert data_entropy(0xABCD, 16, 8, "xor_fold") == 0xAB ^ 0xCD
    assert data_entropy(0x5, 3, 2, "xor_fold") == 0b01 ^ 0b01


def test_data_entropy_huawei_style_14_lsbs():
    significand = 0b101100111000111010101101  # 24 bits
    r = data_entropy(significand, 24, 14, "lsb")
    assert r == significand & ((1 << 14) - 1)
    assert data_entropy(significand, 24, 14, "lsb") == r  # stateless


def test_databits_finite_supply():
    src = DataBits(0b1011, 4)
    assert src.next_bits(2) == 0b10
    assert src.next_bits(2) == 0b11
    with pytest.raises(EntropyError):
        src.next_bits(1)


# ---------------------------------------------------------------------------
# stream derivation
# ---------------------------------------------------------------------------

def test_derive_stream_replay_identical():
    a = derive_stream(42, 9)
    b = derive_stream(42, 9)
    assert [a.next_bits(64) for _ in range(16)] == [b.next_bits(64) for _ in range(16)]


def test_derive_stream_adjacent_ids_differ():
    assert derive_stream(42, 9).next_bits(64) != derive_stream(42, 10).next_bits(64)


def test_derive_stream_256_ids_pairwise_distinct():
    firsts = [derive_stream(7, i).next_bits(64) for i in range(256)]
    assert len(set(firsts)) == 256


def test_counter_source_is_splitmix_sequence():
    src = CounterSource(10)
    expected = [mix64((10 + 0x9E3779B97F4A7C15 * (i + 1)) & M64) for i in range(4)]
    assert [src.next_bits(64) for _ in range(4)] == expected
