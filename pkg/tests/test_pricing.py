"""Upfront fare arithmetic and invariants."""

import pytest
from hypothesis import given, settings, strategies as st

from poolsim.pricing import PricingParams, share_fare, solo_fare


def test_solo_fare_linear_region():
    assert solo_fare(PricingParams(), 5000.0) == pytest.approx(19.0)


def test_solo_fare_clamped():
    assert solo_fare(PricingParams(), 1000.0) == pytest.approx(10.0)


def test_solo_fare_clamp_boundary():
    # 4 + 3*2 = 10 sits exactly at the minimum fare
    assert solo_fare(PricingParams(), 2000.0) == pytest.approx(10.0)


def test_share_fare_discount():
    p = PricingParams(discount=0.2)
    assert share_fare(p, 5000.0) == pytest.approx(15.2)


def test_share_fare_zero_discount_is_identity():
    p = PricingParams(discount=0.0)
    assert share_fare(p, 3456.0) == solo_fare(p, 3456.0)


def test_discount_applies_after_clamp():
    # clamped solo fare 10, then 40% off -> 6.0 (below the minimum fare)
    p = PricingParams(discount=0.4)
    assert share_fare(p, 1000.0) == pytest.approx(6.0)


def test_non_positive_distance_rejected():
    with pytest.raises(ValueError):
        solo_fare(PricingParams(), 0.0)
    with pytest.raises(ValueError):
        share_fare(PricingParams(), -5.0)


def test_invalid_params_rejected():
    with pytest.raises(ValueError):
        PricingParams(discount=1.0)
    with pytest.raises(ValueError):
        PricingParams(base_fare=-1.0)


@given(d=st.floats(1.0, 50_000.0), theta=st.floats(0.0, 0.99))
@settings(max_examples=300, deadline=None)
def test_share_never_exceeds_solo(d, theta):
    p = PricingParams(discount=theta)
    assert share_fare(p, d) <= solo_fare(p, d) + 1e-12
    if theta == 0:
        assert share_fare(p, d) == solo_fare(p, d)


@given(d1=st.floats(1.0, 50_000.0), d2=st.floats(1.0, 50_000.0))
@settings(max_examples=300, deadline=None)
def test_fares_monotone_in_distance(d1, d2):
    p = PricingParams(discount=0.3)
    lo, hi = sorted((d1, d2))
    assert solo_fare(p, lo) <= solo_fare(p, hi) + 1e-12
    assert share_fare(p, lo) <= share_fare(p, hi) + 1e-12
