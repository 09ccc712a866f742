"""Upfront fares for solo-hailing and ride-sharing.

Fares depend only on the customer's own shortest trip distance, never on the
realized route. The ride-sharing discount applies after the minimum-fare
clamp, so short discounted trips can be priced below the minimum fare.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class PricingParams:
    base_fare: float = 4.0        # CNY
    per_km: float = 3.0           # CNY per km
    min_fare: float = 10.0        # CNY
    discount: float = 0.0         # ride-sharing discount ratio, [0, 1)
    pooled_trip_subsidy: float = 0.0  # CNY per successfully pooled customer

    def __post_init__(self):
        if self.base_fare < 0 or self.per_km < 0 or self.min_fare < 0:
            raise ValueError("fare constants must be non-negative")
        if not 0 <= self.discount < 1:
            raise ValueError("discount must lie in [0, 1)")


def solo_fare(params: PricingParams, distance_m: float) -> float:
    """Base fare plus per-km fare, clamped up to the minimum fare."""
    if distance_m <= 0:
        raise ValueError("trip distance must be positive")
    return max(params.min_fare, params.base_fare + params.per_km * distance_m / 1000.0)


def share_fare(params: PricingParams, distance_m: float) -> float:
    """Discounted solo fare: (1 - discount) x solo_fare."""
    return (1.0 - params.discount) * solo_fare(params, distance_m)
