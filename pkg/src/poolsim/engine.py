"""Discrete-time batch simulation of the mixed solo/ride-sharing market.

Each batch interval: admit arrivals (upfront prices, one choice draw per
order), expire stale requests, enumerate candidate trips, solve the exact
assignment, reposition leftover idle vehicles, then advance all vehicles at
constant speed with sub-tick pickup/dropoff timestamps. After the demand
horizon a tail phase runs until every scheduled customer is delivered.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .demand import ElasticityTable, Order, ServiceChoice, choose_service
from .matching import (
    Stop, VehicleState, enumerate_candidate_trips, reposition_idle,
    solve_assignment,
)
from .netgraph import RoadNetwork
from .pricing import PricingParams, share_fare, solo_fare


class SimulationError(Exception):
    pass


@dataclass(frozen=True)
class SimConfig:
    batch_interval: float = 30.0
    vehicle_speed: float = 8.33          # m/s, ~30 km/h
    horizon_start: float = 21600.0       # 06:00
    horizon_end: float = 43200.0         # 12:00
    tail: float = 2700.0
    abandonment_timeout: float = 600.0
    fleet_size: int = 500
    max_detour: float = 0.3
    pricing: PricingParams = field(default_factory=PricingParams)
    seed: int = 0
    cost_per_km: float = 0.5
    solver_budget_s: float = 1.0
    solver_node_budget: int = 20000
    pure_solo: bool = False

    def __post_init__(self):
        if self.batch_interval <= 0 or self.vehicle_speed <= 0:
            raise SimulationError("batch_interval and vehicle_speed must be positive")
        if self.horizon_end <= self.horizon_start:
            raise SimulationError("empty simulation horizon")
        if not 0 < self.max_detour < 1:
            raise SimulationError("max_detour must lie in (0, 1)")
        if self.fleet_size <= 0 or self.tail < 0 or self.abandonment_timeout <= 0:
            raise SimulationError("invalid fleet/tail/timeout configuration")


@dataclass
class TripRecord:
    order_id: object
    choice: ServiceChoice
    outcome: str                  # "delivered" | "abandoned"
    request_time: float
    matching_time: float = 0.0
    pickup_time: float = 0.0
    original_distance: float = 0.0
    in_vehicle_distance: float = 0.0
    shared_distance: float = 0.0
    detour_distance: float = 0.0
    fare: float = 0.0
    pooled: bool = False
    partners: tuple = ()
    saved_distance: float = 0.0   # half of each pooled pair's saved distance


def init_fleet(config: SimConfig, node_weights, network: RoadNetwork, rng):
    """Place the fleet by a multinomial draw over demand node weights."""
    if len(network) == 0:
        raise SimulationError("empty network")
    nodes = [n for n in network.node_ids if node_weights.get(n, 0.0) > 0]
    if not nodes:
        raise SimulationError("node weights are empty")
    probs = np.array([node_weights[n] for n in nodes], dtype=float)
    total = probs.sum()
    if abs(total - 1.0) > 1e-6:
        raise SimulationError(f"node weights sum to {total}, expected 1")
    counts = rng.multinomial(config.fleet_size, probs / total)
    vehicles = []
    vid = 0
    for node, count in zip(nodes, counts):
        for _ in range(int(count)):
            vehicles.append(VehicleState(vid, node))
            vid += 1
    return vehicles


class Simulation:
    """Mutable simulation state; ``run()`` drives it to completion."""

    def __init__(self, config: SimConfig, orders, network: RoadNetwork,
                 elasticity: ElasticityTable, vehicles=None, fleet_rng=None,
                 choice_rng=None):
        times = [o.request_time for o in orders]
        if any(b < a for a, b in zip(times, times[1:])):
            raise SimulationError("orders must be sorted by request_time")
        self.config = config
        self.network = network
        self.elasticity = elasticity
        self.orders = list(orders)
        ss = np.random.SeedSequence(config.seed)
        fleet_ss, choice_ss = ss.spawn(2)
        self.choice_rng = choice_rng or np.random.default_rng(choice_ss)
        if vehicles is None:
            weights = demand_node_weights(orders, network)
            vehicles = init_fleet(config, weights, network,
                                  fleet_rng or np.random.default_rng(fleet_ss))
        self.vehicles = {v.vehicle_id: v for v in vehicles}
        self.now = config.horizon_start
        self.next_order = 0
        self.waiting = {}            # order_id -> (Order, choice)
        self.orders_by_id = {}
        self.records = {}            # order_id -> TripRecord (in progress)
        self.events = []
        self.scheduled_snapshots = []
        self.fleet_samples = []      # (time, ((vehicle_id, node), ...))
        self.admitted = 0
        self.solver_timeouts = 0
        # vehicle-odometer readings at pickup/dropoff, for saved distance
        self._odometer_marks = {}    # order_id -> [at_pickup, at_dropoff]

    # -- event helpers -----------------------------------------------------

    def _emit(self, etype, time_s, order_id=None, vehicle_id=None, node=None):
        self.events.append({
            "type": etype,
            "time_s": round(float(time_s), 6),
            "order_id": order_id,
            "vehicle_id": vehicle_id,
            "node": node,
        })

    # -- batch phases ------------------------------------------------------

    def _acceptance_probability(self):
        if self.config.pure_solo:
            return 0.0
        return self.elasticity.acceptance_probability(
            self.config.max_detour, self.config.pricing.discount)

    def _admit_arrivals(self, t):
        p_accept = self._acceptance_probability()
        while (self.next_order < len(self.orders)
               and self.orders[self.next_order].request_time <= t):
            order = self.orders[self.next_order]
            self.next_order += 1
            if order.request_time < self.config.horizon_start:
                raise SimulationError(f"order {order.order_id} precedes the horizon")
            choice = choose_service(order, p_accept, self.choice_rng)
            self._emit("request", order.request_time, order_id=order.order_id,
                       node=order.origin)
            self._emit("choice", t, order_id=order.order_id,
                       node=order.origin)
            self.waiting[order.order_id] = (order, choice)
            self.orders_by_id[order.order_id] = order
            fare = (share_fare(self.config.pricing, order.trip_distance)
                    if choice is ServiceChoice.SHARE
                    else solo_fare(self.config.pricing, order.trip_distance))
            rec = TripRecord(
                order_id=order.order_id, choice=choice, outcome="waiting",
                request_time=order.request_time,
                original_distance=order.trip_distance, fare=fare)
            rec._admit_t = t
            self.records[order.order_id] = rec
            self.admitted += 1

    def _expire(self, t, force=False):
        for oid in sorted(self.waiting, key=str):
            order, _ = self.waiting[oid]
            if force or t - order.request_time > self.config.abandonment_timeout:
                del self.waiting[oid]
                rec = self.records[oid]
                rec.outcome = "abandoned"
                rec.fare = 0.0
                self._emit("abandon", t, order_id=oid, node=order.origin)

    def _match(self, t):
        batch = [(order, choice) for order, choice in self.waiting.values()]
        if batch:
            scheduled = {oid for v in self.vehicles.values()
                         for oid in v.scheduled}
            originals = {oid: self.orders_by_id[oid].trip_distance
                         for oid in scheduled}
            choices = {oid: self.records[oid].choice for oid in scheduled}
            candidates = enumerate_candidate_trips(
                batch, list(self.vehicles.values()), self.network,
                self.config.max_detour, self.config.pricing,
                cost_per_km=self.config.cost_per_km, trip_originals=originals,
                scheduled_choices=choices)
            solution = solve_assignment(
                candidates, time_budget_s=self.config.solver_budget_s,
                node_budget=self.config.solver_node_budget)
            if not solution.optimal:
                self.solver_timeouts += 1
            for trip in solution.chosen:
                self._commit_trip(trip, t)
        snapshot = [len(v.scheduled) for _, v in sorted(self.vehicles.items(),
                                                        key=lambda kv: str(kv[0]))]
        self.scheduled_snapshots.append(snapshot)

    def _commit_trip(self, trip, t):
        v = self.vehicles[trip.vehicle_id]
        v.relocating = False
        v.reposition_target = None
        v.schedule = list(trip.stops)
        v.scheduled = set(v.onboard) | {s.order_id for s in trip.stops}
        self._rebuild_plan(v)
        for oid in trip.order_ids:
            del self.waiting[oid]
            rec = self.records[oid]
            rec.outcome = "matched"
            rec.matching_time = max(t - rec._admit_t, 0.0)
            self._odometer_marks[oid] = [None, None]
            self.records[oid]._match_t = t
            self._emit("match", t, order_id=oid, vehicle_id=v.vehicle_id)

    def _rebuild_plan(self, v):
        start, _ = v.effective_position()
        plan = []
        pos = start
        for stop in v.schedule:
            path = self.network.shortest_path(pos, stop.node)
            if path is None:
                raise SimulationError(
                    f"vehicle {v.vehicle_id}: unreachable stop {stop.node!r}")
            for a, b in zip(path.node_sequence, path.node_sequence[1:]):
                plan.append(("move", a, b, _min_edge_length(self.network, a, b)))
            plan.append(("stop", stop))
            pos = stop.node
        v.plan = plan

    def _reposition(self, t):
        idle = [v for v in self.vehicles.values() if v.idle]
        waiting = [order for order, _ in self.waiting.values()]
        moves = reposition_idle(idle, waiting, self.network)
        for vid, target in moves:
            v = self.vehicles[vid]
            if v.reposition_target == target and v.relocating:
                continue
            start, _ = v.effective_position()
            path = self.network.shortest_path(start, target)
            if path is None:
                continue
            v.plan = [("move", a, b, _min_edge_length(self.network, a, b))
                      for a, b in zip(path.node_sequence, path.node_sequence[1:])]
            v.relocating = True
            v.reposition_target = target
            self._emit("reposition", t, vehicle_id=vid, node=target)

    # -- motion ------------------------------------------------------------

    def step(self, dt):
        """Advance every vehicle dt seconds; stop events get exact sub-tick
        timestamps."""
        if dt <= 0:
            raise SimulationError("dt must be > 0")
        for _, v in sorted(self.vehicles.items(), key=lambda kv: str(kv[0])):
            self._advance_vehicle(v, self.now, dt)
        self.now += dt

    def _advance_vehicle(self, v: VehicleState, t0, dt):
        speed = self.config.vehicle_speed
        budget = dt * speed
        cursor = t0
        while True:
            if v.edge_to is not None:
                if budget <= 1e-9:
                    break
                step_m = min(budget, v.edge_remaining)
                v.edge_remaining -= step_m
                budget -= step_m
                v.total_distance += step_m
                cursor += step_m / speed
                if v.onboard:
                    both = len(v.onboard) >= 2
                    for oid in v.onboard:
                        v.onboard[oid] += step_m
                        if both:
                            self.records[oid].shared_distance += step_m
                if v.edge_remaining <= 1e-9:
                    v.node = v.edge_to
                    v.edge_to = None
                    v.edge_remaining = 0.0
            elif v.plan:
                item = v.plan.pop(0)
                if item[0] == "move":
                    _, a, b, length = item
                    v.edge_to = b
                    v.edge_remaining = length
                else:
                    self._arrive_at_stop(v, item[1], cursor)
            else:
                if v.relocating:
                    v.relocating = False
                    v.reposition_target = None
                break

    def _arrive_at_stop(self, v, stop: Stop, time_s):
        # keep the remaining-schedule view in sync with the consumed plan
        if v.schedule and v.schedule[0] == stop:
            v.schedule.pop(0)
        elif stop in v.schedule:
            v.schedule.remove(stop)
        rec = self.records[stop.order_id]
        if stop.kind == "pickup":
            v.onboard[stop.order_id] = 0.0
            rec.pickup_time = max(time_s - rec._match_t, 0.0)
            self._odometer_marks[stop.order_id][0] = v.total_distance
            self._emit("pickup", time_s, order_id=stop.order_id,
                       vehicle_id=v.vehicle_id, node=stop.node)
        else:
            rec.in_vehicle_distance = v.onboard.pop(stop.order_id)
            v.scheduled.discard(stop.order_id)
            rec.outcome = "delivered"
            rec.detour_distance = max(
                rec.in_vehicle_distance - rec.original_distance, 0.0)
            rec.pooled = rec.shared_distance > 1e-9
            self._odometer_marks[stop.order_id][1] = v.total_distance
            self._emit("dropoff", time_s, order_id=stop.order_id,
                       vehicle_id=v.vehicle_id, node=stop.node)
        # partner bookkeeping for saved-distance attribution
        if stop.kind == "pickup" and len(v.onboard) == 2:
            a, b = sorted(v.onboard, key=str)
            ra, rb = self.records[a], self.records[b]
            if b not in ra.partners:
                ra.partners = ra.partners + (b,)
            if a not in rb.partners:
                rb.partners = rb.partners + (a,)

    # -- main loop ---------------------------------------------------------

    def run(self):
        cfg = self.config
        t = cfg.horizon_start
        # the first boundary at or beyond horizon_end is the last demand batch
        while t - cfg.batch_interval < cfg.horizon_end - 1e-9:
            self._admit_arrivals(min(t, cfg.horizon_end))
            self._sample_fleet(t)
            self._expire(t)
            self._match(t)
            if t >= cfg.horizon_end - 1e-9:
                self._expire(t, force=True)
            self._reposition(t)
            self.step(cfg.batch_interval)
            t = self.now
        # tail: deliver everything already scheduled, no arrivals
        tail_end = cfg.horizon_end + cfg.tail
        while any(v.scheduled for v in self.vehicles.values()) or self.now < tail_end:
            if self.now >= tail_end + 86400:
                raise SimulationError("tail did not converge")
            self.step(cfg.batch_interval)
        self._attribute_saved_distance()
        self.events.sort(key=lambda e: e["time_s"])
        records = [self.records[oid] for oid in sorted(self.records, key=str)]
        for rec in records:
            if rec.outcome == "waiting":   # never matched, never expired
                rec.outcome = "abandoned"
                rec.fare = 0.0
        return RunResult(
            config=cfg, events=self.events, records=records,
            scheduled_snapshots=self.scheduled_snapshots,
            fleet_samples=self.fleet_samples,
            total_fleet_distance=sum(v.total_distance for v in self.vehicles.values()),
            admitted=self.admitted, solver_timeouts=self.solver_timeouts)

    def _sample_fleet(self, t):
        sample = tuple((vid, v.node) for vid, v in
                       sorted(self.vehicles.items(), key=lambda kv: str(kv[0])))
        self.fleet_samples.append((t, sample))

    def _attribute_saved_distance(self):
        seen = set()
        for oid, rec in self.records.items():
            for pid in rec.partners:
                key = tuple(sorted((str(oid), str(pid))))
                if key in seen:
                    continue
                seen.add(key)
                other = self.records[pid]
                marks_a = self._odometer_marks.get(oid)
                marks_b = self._odometer_marks.get(pid)
                if not marks_a or not marks_b:
                    continue
                if None in marks_a or None in marks_b:
                    continue
                actual = max(marks_a[1], marks_b[1]) - min(marks_a[0], marks_b[0])
                saved = rec.original_distance + other.original_distance - actual
                rec.saved_distance += saved / 2.0
                other.saved_distance += saved / 2.0


@dataclass
class RunResult:
    config: SimConfig
    events: list
    records: list
    scheduled_snapshots: list
    fleet_samples: list
    total_fleet_distance: float
    admitted: int
    solver_timeouts: int = 0

    def events_jsonl(self):
        return "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.events)


def demand_node_weights(orders, network: RoadNetwork):
    """Per-node origin frequency weights (uniform fallback when empty)."""
    counts = {}
    for o in orders:
        counts[o.origin] = counts.get(o.origin, 0) + 1
    if not counts:
        n = len(network)
        return {nid: 1.0 / n for nid in network.node_ids}
    total = sum(counts.values())
    return {nid: c / total for nid, c in counts.items()}


def run_simulation(config: SimConfig, orders, network, elasticity,
                   vehicles=None, init_weights=None):
    """Configure and run one simulation; returns a RunResult."""
    sim = Simulation(config, orders, network, elasticity, vehicles=vehicles)
    if vehicles is None and init_weights is not None:
        ss = np.random.SeedSequence(config.seed)
        fleet_ss, _ = ss.spawn(2)
        fleet = init_fleet(config, init_weights, network,
                           np.random.default_rng(fleet_ss))
        sim.vehicles = {v.vehicle_id: v for v in fleet}
    return sim.run()


def _min_edge_length(network, a, b):
    best = None
    for v, w in network.adj[a]:
        if v == b and (best is None or w < best):
            best = w
    if best is None:
        raise SimulationError(f"no edge {a!r}->{b!r}")
    return best
