"""Post-run measurement: distance accounting, welfare metrics, emissions,
and demand-to-supply zone statistics.

All aggregation is pure post-processing over the immutable run outputs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from importlib import resources

from .demand import ServiceChoice
from .engine import RunResult, TripRecord


class MetricsError(Exception):
    pass


# -- emissions -------------------------------------------------------------

class EmissionModel:
    """gCO2 per km, either constant or as a speed curve.

    The speed curve is ``inv/v + const + lin*v + quad*v^2`` with v in km/h,
    a standard urban fuel-consumption shape: high at crawl speeds, falling
    toward free flow. Coefficients live in ``data/emission_curve.csv`` and
    carry no authority beyond being a documented default.
    """

    def __init__(self, mode="constant", constant_factor=200.0, curve=None):
        if mode not in ("constant", "speed-curve"):
            raise MetricsError(f"unknown emission mode {mode!r}")
        self.mode = mode
        self.constant_factor = float(constant_factor)
        self.curve = curve or default_curve()
        if self.constant_factor <= 0:
            raise MetricsError("constant emission factor must be positive")

    def factor(self, speed_mps):
        """Emission factor in gCO2/km at the given speed."""
        if speed_mps <= 0:
            raise MetricsError("speed must be positive")
        if self.mode == "constant":
            return self.constant_factor
        v = speed_mps * 3.6
        c = self.curve
        value = c["inv"] / v + c["const"] + c["lin"] * v + c["quad"] * v * v
        if value <= 0:
            raise MetricsError(f"emission curve non-positive at {v:.1f} km/h")
        return value


def default_curve():
    with resources.as_file(resources.files("poolsim.data") / "emission_curve.csv") as p:
        curve = {}
        with open(p, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                curve[row["coefficient"]] = float(row["value"])
    return curve


def co2_for_leg(model: EmissionModel, distance_m, speed_mps):
    """Grams of CO2 for one driven leg."""
    if distance_m < 0:
        raise MetricsError("distance must be >= 0")
    return distance_m / 1000.0 * model.factor(speed_mps)


# -- per-trip distance accounting -----------------------------------------

def trip_distances(network, stops, members):
    """Shared/detour/saved accounting for one pooled two-customer route.

    ``stops`` is the realized pickup/dropoff sequence (vehicle starts at the
    first stop); ``members`` the two orders. The shared distance is the
    segment with both customers onboard; each member's detour is its
    in-vehicle distance minus its shortest trip distance; the pair's saved
    distance (summed shortest distances minus the realized route) is split
    half to each member.

    Returns ``{order_id: {"shared": m, "detour": m, "saved": m}}``.
    """
    legs = []
    for a, b in zip(stops, stops[1:]):
        d = network.distance(a.node, b.node)
        if d is None:
            raise MetricsError(f"unreachable stop pair {a.node!r}->{b.node!r}")
        legs.append(d)
    cum = [0.0]
    for leg in legs:
        cum.append(cum[-1] + leg)
    pick = {s.order_id: cum[i] for i, s in enumerate(stops) if s.kind == "pickup"}
    drop = {s.order_id: cum[i] for i, s in enumerate(stops) if s.kind == "dropoff"}
    originals = {m.order_id: m.trip_distance for m in members}
    second_pickup = sorted(pick.values())[-1]
    first_dropoff = sorted(drop.values())[0]
    shared = max(first_dropoff - second_pickup, 0.0)
    total = cum[-1]
    saved = sum(originals.values()) - total
    out = {}
    for m in members:
        oid = m.order_id
        inveh = drop[oid] - pick[oid]
        out[oid] = {
            "shared": shared if shared > 0 else 0.0,
            "detour": max(inveh - originals[oid], 0.0),
            "saved": saved / 2.0 if shared > 0 else 0.0,
        }
    return out


# -- system metrics --------------------------------------------------------

@dataclass
class SystemMetrics:
    revenue: float
    service_rate: float
    avg_scheduled_requests: float
    emission_factor: float            # gCO2 per delivered km
    mean_matching_time: float
    mean_pickup_time: float
    ssr: float
    sdr: float
    ddr: float
    sdr_mean_of_ratios: float
    ddr_mean_of_ratios: float
    mean_saved_distance: float        # m, over delivered Share choosers
    mean_saved_co2: float             # g, over delivered Share choosers
    admitted: int
    delivered: int
    abandoned: int
    share_choosers: int
    pooled_customers: int
    total_fleet_km: float
    total_co2_kg: float

    def as_row(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def aggregate_metrics(result: RunResult, emission_model: EmissionModel) -> SystemMetrics:
    """Fold a finished run into the system-level metric set.

    Fleet CO2 covers every driven meter (service, deadhead, repositioning);
    the delivery emission factor divides it by the delivered customers'
    shortest-trip kilometers.
    """
    cfg = result.config
    records = result.records
    delivered = [r for r in records if r.outcome == "delivered"]
    abandoned = [r for r in records if r.outcome == "abandoned"]
    pooled = [r for r in delivered if r.pooled]
    revenue = sum(r.fare for r in delivered)
    revenue += cfg.pricing.pooled_trip_subsidy * len(pooled)
    service_rate = len(delivered) / result.admitted if result.admitted else 0.0
    if result.scheduled_snapshots:
        avg_scheduled = sum(
            sum(snap) / len(snap) for snap in result.scheduled_snapshots if snap
        ) / len(result.scheduled_snapshots)
    else:
        avg_scheduled = 0.0
    total_co2_g = co2_for_leg(emission_model, result.total_fleet_distance,
                              cfg.vehicle_speed)
    delivered_km = sum(r.original_distance for r in delivered) / 1000.0
    emission_factor = total_co2_g / delivered_km if delivered_km > 0 else 0.0

    share_all = [r for r in records if r.choice is ServiceChoice.SHARE]
    share_delivered = [r for r in delivered if r.choice is ServiceChoice.SHARE]
    ssr = len(pooled) / len(share_all) if share_all else 0.0
    orig_sum = sum(r.original_distance for r in share_delivered)
    sdr = sum(r.shared_distance for r in share_delivered) / orig_sum if orig_sum else 0.0
    ddr = sum(r.detour_distance for r in share_delivered) / orig_sum if orig_sum else 0.0
    sdr_mor = _mean([r.shared_distance / r.original_distance for r in share_delivered])
    ddr_mor = _mean([r.detour_distance / r.original_distance for r in share_delivered])
    mean_saved = _mean([r.saved_distance for r in share_delivered])
    factor = emission_model.factor(cfg.vehicle_speed)
    mean_saved_co2 = mean_saved / 1000.0 * factor

    return SystemMetrics(
        revenue=revenue,
        service_rate=service_rate,
        avg_scheduled_requests=avg_scheduled,
        emission_factor=emission_factor,
        mean_matching_time=_mean([r.matching_time for r in delivered]),
        mean_pickup_time=_mean([r.pickup_time for r in delivered]),
        ssr=ssr, sdr=sdr, ddr=ddr,
        sdr_mean_of_ratios=sdr_mor, ddr_mean_of_ratios=ddr_mor,
        mean_saved_distance=mean_saved, mean_saved_co2=mean_saved_co2,
        admitted=result.admitted, delivered=len(delivered),
        abandoned=len(abandoned), share_choosers=len(share_all),
        pooled_customers=len(pooled),
        total_fleet_km=result.total_fleet_distance / 1000.0,
        total_co2_kg=total_co2_g / 1000.0,
    )


def _mean(xs):
    return sum(xs) / len(xs) if xs else 0.0


# -- zone analysis ---------------------------------------------------------

def normalized_load(arrivals_per_h, mean_distance_km, n_vehicles, speed_kmh):
    """Dimensionless demand-to-supply ratio: demand km/h over supply km/h."""
    if n_vehicles <= 0 or speed_kmh <= 0:
        raise MetricsError("zero supply")
    return arrivals_per_h * mean_distance_km / (n_vehicles * speed_kmh)


def classify_zone(x):
    """Cold below 0.5, Hot above 2, Normal on the closed band between."""
    if x < 0:
        raise MetricsError("normalized load must be >= 0")
    if x < 0.5:
        return "cold"
    if x > 2:
        return "hot"
    return "normal"


@dataclass
class ZoneGrid:
    """Equal-area lon/lat cells over the network bounding box, crossed with
    half-hour slots over the demand horizon."""

    lon_min: float
    lon_max: float
    lat_min: float
    lat_max: float
    t_start: float
    t_end: float
    n_cells: int = 10          # per axis
    slot_s: float = 1800.0

    @classmethod
    def for_network(cls, network, t_start, t_end, n_cells=10, slot_s=1800.0):
        lons = [c[0] for c in network.coords.values()]
        lats = [c[1] for c in network.coords.values()]
        return cls(min(lons), max(lons), min(lats), max(lats),
                   t_start, t_end, n_cells, slot_s)

    @property
    def n_slots(self):
        return max(1, math.ceil((self.t_end - self.t_start) / self.slot_s - 1e-9))

    def cell_of(self, lon, lat):
        fx = 0.0 if self.lon_max == self.lon_min else \
            (lon - self.lon_min) / (self.lon_max - self.lon_min)
        fy = 0.0 if self.lat_max == self.lat_min else \
            (lat - self.lat_min) / (self.lat_max - self.lat_min)
        i = min(int(fx * self.n_cells), self.n_cells - 1)
        j = min(int(fy * self.n_cells), self.n_cells - 1)
        return max(i, 0), max(j, 0)

    def slot_of(self, t):
        k = int((t - self.t_start) / self.slot_s)
        return min(max(k, 0), self.n_slots - 1)


def zone_stats(result: RunResult, network, grid: ZoneGrid = None):
    """Per-(cell, slot) load classification plus per-class sharing metrics.

    Returns ``(cells, per_class)``. ``cells`` rows carry lambda (1/h), mean
    trip distance, time-averaged vehicle count, normalized load, and class;
    ``per_class`` aggregates SSR/SDR/DDR over the orders originating in each
    class (absent when a class has no Share choosers).
    """
    cfg = result.config
    if grid is None:
        grid = ZoneGrid.for_network(network, cfg.horizon_start, cfg.horizon_end)
    slot_h = grid.slot_s / 3600.0
    speed_kmh = cfg.vehicle_speed * 3.6

    orders_by_key = {}
    for rec in result.records:
        origin = _origin_node(result, rec)
        if origin is None:
            continue
        lon, lat = network.coords[origin]
        key = (grid.cell_of(lon, lat), grid.slot_of(rec.request_time))
        orders_by_key.setdefault(key, []).append(rec)

    veh_counts = {}
    samples_per_slot = {}
    for t, sample in result.fleet_samples:
        slot = grid.slot_of(t)
        if not (grid.t_start - 1e-9 <= t <= grid.t_end + 1e-9):
            continue
        samples_per_slot[slot] = samples_per_slot.get(slot, 0) + 1
        for _, node in sample:
            lon, lat = network.coords[node]
            key = (grid.cell_of(lon, lat), slot)
            veh_counts[key] = veh_counts.get(key, 0) + 1

    cells = []
    class_records = {}
    keys = set(orders_by_key) | set(veh_counts)
    for key in sorted(keys, key=lambda k: (k[0], k[1])):
        (ci, cj), slot = key
        recs = orders_by_key.get(key, [])
        nsmpl = samples_per_slot.get(slot, 0)
        n_veh = veh_counts.get(key, 0) / nsmpl if nsmpl else 0.0
        lam = len(recs) / slot_h
        dbar_km = _mean([r.original_distance for r in recs]) / 1000.0
        if n_veh > 0:
            x = normalized_load(lam, dbar_km, n_veh, speed_kmh)
            cls = classify_zone(x)
        else:
            x, cls = None, None
        cell_row = {
            "cell_i": ci, "cell_j": cj, "slot": slot,
            "lambda_per_h": lam, "mean_distance_km": dbar_km,
            "vehicles": n_veh, "speed_kmh": speed_kmh,
            "load": x, "zone_class": cls,
        }
        cell_row.update(_sharing_stats(recs))
        cells.append(cell_row)
        if cls is not None:
            class_records.setdefault(cls, []).extend(recs)

    per_class = {}
    for cls, recs in class_records.items():
        stats = _sharing_stats(recs)
        if stats["ssr"] is not None:
            per_class[cls] = stats
    return cells, per_class


def _sharing_stats(recs):
    """SSR/SDR/DDR over one record subset; None-valued when no Share
    choosers are present (absent, not zero)."""
    share = [r for r in recs if r.choice is ServiceChoice.SHARE]
    if not share:
        return {"ssr": None, "sdr": None, "ddr": None, "share_choosers": 0}
    delivered = [r for r in share if r.outcome == "delivered"]
    pooled = [r for r in delivered if r.pooled]
    orig = sum(r.original_distance for r in delivered)
    return {
        "ssr": len(pooled) / len(share),
        "sdr": sum(r.shared_distance for r in delivered) / orig if orig else 0.0,
        "ddr": sum(r.detour_distance for r in delivered) / orig if orig else 0.0,
        "share_choosers": len(share),
    }


def _origin_node(result, rec):
    # request events carry the snapped origin node
    if not hasattr(result, "_origin_index"):
        result._origin_index = {
            e["order_id"]: e["node"] for e in result.events if e["type"] == "request"
        }
    return result._origin_index.get(rec.order_id)
