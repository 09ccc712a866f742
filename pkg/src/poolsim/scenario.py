"""Closed-form revenue-rate comparison of pooling vs solo service, plus
carbon-credit valuation. Independent of the simulator.

Geometry: an idle vehicle deadheads x1 to the first customer; the pooled
route then runs legs x2..x4 through both itineraries, while the solo
alternative serves only the higher-fare customer over distance L1.
"""

from __future__ import annotations


def revenue_rate_solo(w1, x1, L1, v):
    """Revenue per hour from serving only the higher-fare customer."""
    _require_positive(w1=w1, L1=L1, v=v)
    if x1 < 0:
        raise ValueError("deadhead x1 must be >= 0")
    return w1 / ((x1 + L1) / v)


def revenue_rate_share(theta, w1, w2, x1, x2, x3, x4, v):
    """Revenue per hour from pooling both customers at discount theta."""
    _require_positive(w1=w1, v=v)
    if w2 < 0 or min(x1, x2, x3, x4) < 0:
        raise ValueError("fares and legs must be non-negative")
    if not 0 <= theta < 1:
        raise ValueError("theta must lie in [0, 1)")
    total = x1 + x2 + x3 + x4
    if total <= 0:
        raise ValueError("pooled route has zero length")
    return (1.0 - theta) * (w1 + w2) / (total / v)


def revenue_ratio(theta, fare_ratio, dist_ratio):
    """Pooled-to-solo revenue-rate ratio from the two summary ratios.

    ``fare_ratio`` is the lower fare over the higher one (in (0, 1]);
    ``dist_ratio`` the pooled route length over the solo route length
    (>= 1). A value >= 1 means pooling does not lose revenue.
    """
    if not 0 < fare_ratio <= 1:
        raise ValueError("fare_ratio must lie in (0, 1]")
    if dist_ratio < 1:
        raise ValueError("dist_ratio must be >= 1")
    if not 0 <= theta < 1:
        raise ValueError("theta must lie in [0, 1)")
    return (1.0 - theta) * (1.0 + fare_ratio) / dist_ratio


def breakeven_discount(fare_ratio, dist_ratio):
    """Largest discount with no revenue loss, clamped to [0, 1)."""
    theta = 1.0 - dist_ratio / (1.0 + fare_ratio)
    return min(max(theta, 0.0), 1.0 - 1e-15)


def carbon_credit_value(saved_co2_g, carbon_price_per_ton):
    """Monetary value of saved CO2 at a per-ton carbon price."""
    if saved_co2_g < 0 or carbon_price_per_ton < 0:
        raise ValueError("inputs must be non-negative")
    return saved_co2_g * carbon_price_per_ton / 1e6


def _require_positive(**kwargs):
    for name, value in kwargs.items():
        if value <= 0:
            raise ValueError(f"{name} must be positive")
