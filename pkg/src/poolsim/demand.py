"""Order ingestion and synthesis, price/detour elasticity, service choice.

The shipped elasticity table is survey-calibrated acceptance probabilities on
a (detour ratio, discount ratio) grid; it lives in ``data/elasticity.csv`` so
alternative calibrations can be substituted without code changes.
"""

from __future__ import annotations

import csv
import datetime as _dt
import enum
import warnings
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .netgraph import RoadNetwork


class DemandError(Exception):
    pass


class ServiceChoice(enum.Enum):
    SOLO = "solo"
    SHARE = "share"


@dataclass(frozen=True)
class Order:
    """A single-customer request, snapped to the road network."""

    order_id: object
    origin: object
    destination: object
    request_time: float   # seconds from simulation start
    trip_distance: float  # shortest origin->destination, meters


class ElasticityTable:
    """Acceptance probability over a (detour ratio, discount ratio) grid.

    Invariants: entries in [0, 1]; zero acceptance at zero discount;
    non-decreasing in discount, non-increasing in detour.
    """

    def __init__(self, detour_grid, discount_grid, acceptance):
        self.detour_grid = np.asarray(detour_grid, dtype=float)
        self.discount_grid = np.asarray(discount_grid, dtype=float)
        self.acceptance = np.asarray(acceptance, dtype=float)
        if self.acceptance.shape != (len(self.detour_grid), len(self.discount_grid)):
            raise DemandError("acceptance matrix shape does not match the grids")
        if np.any(self.acceptance < 0) or np.any(self.acceptance > 1):
            raise DemandError("acceptance probabilities must lie in [0, 1]")
        if np.any(np.diff(self.acceptance, axis=1) < 0):
            raise DemandError("acceptance must be non-decreasing along the discount axis")
        zero_cols = np.isclose(self.discount_grid, 0.0)
        if zero_cols.any() and np.any(self.acceptance[:, zero_cols] != 0):
            raise DemandError("acceptance at zero discount must be zero")

    @classmethod
    def from_csv(cls, path):
        """Load from ``detour_ratio,discount_ratio,acceptance_prob`` rows."""
        cells = {}
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["detour_ratio", "discount_ratio", "acceptance_prob"]:
                raise DemandError(f"{path}: unexpected header {reader.fieldnames}")
            for row in reader:
                cells[(float(row["detour_ratio"]), float(row["discount_ratio"]))] = float(
                    row["acceptance_prob"]
                )
        detours = sorted({k[0] for k in cells})
        discounts = sorted({k[1] for k in cells})
        try:
            matrix = [[cells[(dt, dc)] for dc in discounts] for dt in detours]
        except KeyError as exc:
            raise DemandError(f"{path}: incomplete grid, missing cell {exc}") from None
        return cls(detours, discounts, matrix)

    @classmethod
    def default(cls):
        with resources.as_file(resources.files("poolsim.data") / "elasticity.csv") as p:
            return cls.from_csv(p)

    def acceptance_probability(self, detour_guarantee, discount):
        """Bilinear interpolation on the grid, clamped to the grid edges.

        A zero discount always yields zero acceptance (pure solo baseline).
        """
        if detour_guarantee <= 0:
            raise ValueError("detour_guarantee must be > 0")
        if not 0 <= discount < 1:
            raise ValueError("discount must lie in [0, 1)")
        if discount == 0:
            return 0.0
        dgrid = self.discount_grid
        tgrid = self.detour_grid
        # Extend with a zero column at discount 0 if the table omits it.
        if dgrid[0] > 0:
            dgrid = np.concatenate([[0.0], dgrid])
            acc = np.concatenate(
                [np.zeros((len(tgrid), 1)), self.acceptance], axis=1
            )
        else:
            acc = self.acceptance
        x = float(np.clip(detour_guarantee, tgrid[0], tgrid[-1]))
        y = float(np.clip(discount, dgrid[0], dgrid[-1]))
        i = int(np.searchsorted(tgrid, x, side="right") - 1)
        i = min(max(i, 0), len(tgrid) - 2) if len(tgrid) > 1 else 0
        j = int(np.searchsorted(dgrid, y, side="right") - 1)
        j = min(max(j, 0), len(dgrid) - 2) if len(dgrid) > 1 else 0
        if len(tgrid) == 1:
            fx = 0.0
            i0, i1 = 0, 0
        else:
            i0, i1 = i, i + 1
            fx = (x - tgrid[i0]) / (tgrid[i1] - tgrid[i0])
        if len(dgrid) == 1:
            fy = 0.0
            j0, j1 = 0, 0
        else:
            j0, j1 = j, j + 1
            fy = (y - dgrid[j0]) / (dgrid[j1] - dgrid[j0])
        p = (
            acc[i0, j0] * (1 - fx) * (1 - fy)
            + acc[i1, j0] * fx * (1 - fy)
            + acc[i0, j1] * (1 - fx) * fy
            + acc[i1, j1] * fx * fy
        )
        return float(min(max(p, 0.0), 1.0))


def acceptance_probability(table: ElasticityTable, detour_guarantee, discount):
    return table.acceptance_probability(detour_guarantee, discount)


def choose_service(order: Order, p_accept, rng) -> ServiceChoice:
    """Draw the customer's (final) service choice; exactly one rng draw."""
    if not 0 <= p_accept <= 1:
        raise ValueError("p_accept must lie in [0, 1]")
    u = rng.random()
    return ServiceChoice.SHARE if u < p_accept else ServiceChoice.SOLO


def _parse_timestamp(text):
    try:
        return _dt.datetime.fromisoformat(text.strip())
    except ValueError:
        raise DemandError(f"unparsable ISO-8601 timestamp {text!r}") from None


def ingest_orders(path, network: RoadNetwork, sample_fraction=1.0, rng=None,
                  time_origin=None):
    """Read orders.csv, sample, snap to the network, and sort by request time.

    orders.csv columns: ``order_id,origin_lon,origin_lat,dest_lon,dest_lat,
    request_time_iso8601``. Sampling is uniform Bernoulli per record under the
    seeded ``rng``. Records whose endpoints snap to the same node (or are
    mutually unreachable) are dropped and counted in a warning.

    Returns ``(orders, dropped_count)``. ``request_time`` is seconds since
    ``time_origin`` (default: midnight of the earliest timestamp's date).
    """
    if not 0 < sample_fraction <= 1:
        raise DemandError("sample_fraction must lie in (0, 1]")
    if rng is None:
        rng = np.random.default_rng(0)
    raw = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        expected = ["order_id", "origin_lon", "origin_lat", "dest_lon", "dest_lat",
                    "request_time_iso8601"]
        if reader.fieldnames != expected:
            raise DemandError(f"{path}: expected header {expected}, got {reader.fieldnames}")
        for lineno, row in enumerate(reader, start=2):
            try:
                raw.append((
                    row["order_id"],
                    float(row["origin_lon"]), float(row["origin_lat"]),
                    float(row["dest_lon"]), float(row["dest_lat"]),
                    _parse_timestamp(row["request_time_iso8601"]),
                ))
            except (ValueError, DemandError) as exc:
                raise DemandError(f"{path}:{lineno}: {exc}") from None
    if not raw:
        raise DemandError(f"{path}: no order records")
    if time_origin is None:
        earliest = min(r[5] for r in raw)
        time_origin = earliest.replace(hour=0, minute=0, second=0, microsecond=0)
    orders, dropped = [], 0
    for oid, olon, olat, dlon, dlat, ts in raw:
        if sample_fraction < 1.0 and rng.random() >= sample_fraction:
            continue
        origin = network.snap_to_node(olon, olat)
        dest = network.snap_to_node(dlon, dlat)
        dist = network.distance(origin, dest) if origin != dest else 0.0
        if origin == dest or dist is None or dist <= 0:
            dropped += 1
            continue
        t = (ts - time_origin).total_seconds()
        if t < 0:
            raise DemandError(f"order {oid}: timestamp precedes the time origin")
        orders.append(Order(oid, origin, dest, t, dist))
    if dropped:
        warnings.warn(f"{dropped} orders dropped (zero-distance or unreachable)")
    orders.sort(key=lambda o: (o.request_time, str(o.order_id)))
    return orders, dropped


def generate_synthetic_orders(network: RoadNetwork, horizon_s, arrival_rate_per_h,
                              origin_weights, rng, dest_weights=None,
                              min_distance_m=0.0, start_s=0.0, id_prefix="s"):
    """Synthesize a homogeneous-Poisson order stream on the network.

    ``origin_weights`` maps node_id -> probability (must sum to 1 over
    network nodes); destinations default to the same weights. Identical
    origin/destination draws are redrawn; ``min_distance_m`` filters short
    trips by redrawing the destination.
    """
    if arrival_rate_per_h < 0:
        raise DemandError("arrival_rate must be >= 0")
    nodes, probs = _normalize_weights(network, origin_weights)
    if dest_weights is None:
        dnodes, dprobs = nodes, probs
    else:
        dnodes, dprobs = _normalize_weights(network, dest_weights)
    orders = []
    t = start_s
    rate_per_s = arrival_rate_per_h / 3600.0
    k = 0
    while rate_per_s > 0:
        t += rng.exponential(1.0 / rate_per_s)
        if t > start_s + horizon_s:
            break
        origin = nodes[rng.choice(len(nodes), p=probs)]
        dist = None
        for _ in range(200):
            dest = dnodes[rng.choice(len(dnodes), p=dprobs)]
            if dest == origin:
                continue
            dist = network.distance(origin, dest)
            if dist is not None and dist > max(min_distance_m, 0.0):
                break
            dist = None
        if dist is None:
            continue  # isolated origin; skip the arrival
        orders.append(Order(f"{id_prefix}{k:06d}", origin, dest, t, dist))
        k += 1
    return orders


def _normalize_weights(network, weights):
    nodes = [n for n in network.node_ids if weights.get(n, 0.0) > 0]
    if not nodes:
        raise DemandError("node weights are empty")
    total = sum(weights[n] for n in nodes)
    if abs(total - 1.0) > 1e-6:
        raise DemandError(f"node weights sum to {total}, expected 1")
    probs = np.array([weights[n] / total for n in nodes])
    return nodes, probs
