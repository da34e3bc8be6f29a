import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from lebesgue_nn.wide import ONE, WideFloat, log_one_minus, pow_one_minus, power_gap, wsum


def rel(a, b):
    return abs(a - b) / abs(b)


@pytest.mark.parametrize("k", [4, 8, 16])
@pytest.mark.parametrize("m", [10, 10**3, 10**6])
def test_pow_one_minus_against_rationals(k, m):
    p = Fraction(1, 2**k)
    got = pow_one_minus(WideFloat.pow2(-k), m)
    # exact rational power is too large at m=1e6; compare logs instead
    if m <= 10**3:
        want = (1 - p) ** m
        assert rel(got.to_fraction(), want) < Fraction(1, 10**12)
    else:
        want = m * math.log1p(-float(p))
        assert abs(got.log() - want) < 1e-12 * abs(want)


def test_tiny_values_keep_their_exponent():
    # 2^-(2^40) underflows a double by a long way
    w = WideFloat.pow2(-(2**40))
    assert float(w) == 0.0
    assert not w.is_zero()
    assert w.log2() == -(2**40)
    assert (w * w).log2() == -(2**41)
    assert w.sqrt().log2() == -(2**39)


def test_negative_mantissa_rejected():
    with pytest.raises(ValueError):
        WideFloat(-1.0)
    with pytest.raises(ArithmeticError):
        WideFloat(1.0) - WideFloat(2.0)
    assert WideFloat(1.0).monus(2.0).is_zero()


def test_pow_one_minus_edges():
    assert pow_one_minus(0.3, 0) == ONE
    assert pow_one_minus(ONE, 5).is_zero()
    assert log_one_minus(ONE) == -math.inf
    with pytest.raises(ValueError):
        pow_one_minus(WideFloat(1.5), 2)


def test_power_gap_small_gap_no_cancellation():
    # (1 - 2^-60 + 2^-70)^m - (1 - 2^-60)^m ~ m 2^-70 for moderate m
    outside = ONE - WideFloat.pow2(-60)
    got = power_gap(outside, WideFloat.pow2(-70), 1000, inside=WideFloat.pow2(-60))
    assert rel(float(got), 1000 * 2.0**-70) < 1e-9


def test_power_gap_zero_outside():
    assert float(power_gap(0, Fraction(1, 2), 3)) == 0.125


def test_wsum_exact_for_dyadics():
    vals = [WideFloat.pow2(-k) for k in range(1, 40)]
    assert wsum(vals).to_fraction() == sum(Fraction(1, 2**k) for k in range(1, 40))


fractions = st.fractions(min_value=Fraction(1, 10**9), max_value=10**6)


@given(fractions, fractions)
def test_arithmetic_matches_fractions(a, b):
    wa, wb = WideFloat.from_fraction(a), WideFloat.from_fraction(b)
    assert rel((wa * wb).to_fraction(), a * b) < 1e-15
    assert rel((wa / wb).to_fraction(), a / b) < 1e-15
    assert rel((wa + wb).to_fraction(), a + b) < 1e-15
    assert (wa < wb) == (float(a) < float(b)) or float(a) == float(b)


@given(st.integers(min_value=-(2**50), max_value=2**50), st.floats(min_value=1.0, max_value=1.9))
def test_log2_roundtrip(e, mant):
    w = WideFloat(mant, e)
    assert w.log2() == pytest.approx(e + math.log2(mant), abs=1e-9)


@given(st.fractions(min_value=0, max_value=1), st.integers(min_value=1, max_value=60))
def test_pow_one_minus_property(p, m):
    w = WideFloat.from_fraction(p)
    got = pow_one_minus(w, m)
    # compare with the double actually passed in; near p=1 rounding p itself dominates
    want = (1 - w.to_fraction()) ** m
    if want == 0:
        assert got.is_zero()
    else:
        assert rel(got.to_fraction(), want) < 1e-12


def test_underflow_flushes_to_zero():
    edge = WideFloat.pow2(-(2**63))
    assert not edge.is_zero()
    assert (edge * WideFloat.pow2(-1)).is_zero()
    assert pow_one_minus(0.5, 10**80).is_zero()
    with pytest.raises(OverflowError):
        WideFloat.pow2(2**62) * WideFloat.pow2(2**62)
