"""Trip pooling, candidate enumeration, exact batch assignment, repositioning.

Pooling is capacity-2: candidate trips contain one or two requests. A pooled
route must keep every member's in-vehicle detour ratio within the guaranteed
maximum; pickup legs are excluded from the detour ratio but included in the
vehicle's cost. The batch assignment maximizes total utility (trip price
minus vehicle cost) exactly, one trip per vehicle, one vehicle per customer.
"""

from __future__ import annotations

import itertools
import sys
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .demand import Order, ServiceChoice
from .netgraph import RoadNetwork
from .pricing import PricingParams, share_fare, solo_fare

UNREACHABLE = 1e15
CAPACITY = 2


@dataclass(frozen=True)
class Stop:
    kind: str       # "pickup" | "dropoff"
    order_id: object
    node: object


class VehicleState:
    """A capacity-2 vehicle: position, remaining schedule, and bookkeeping.

    Position is the last passed node plus, when mid-edge, the edge being
    traversed and the meters left on it. ``onboard`` maps order_id to meters
    ridden so far (needed for detour checks on en-route insertions).
    """

    def __init__(self, vehicle_id, node):
        self.vehicle_id = vehicle_id
        self.node = node
        self.edge_to = None
        self.edge_remaining = 0.0
        self.schedule: list[Stop] = []
        self.plan: list = []          # engine motion items
        self.onboard: dict = {}       # order_id -> meters ridden
        self.scheduled: set = set()   # onboard + future pickups
        self.relocating = False
        self.reposition_target = None
        self.total_distance = 0.0     # lifetime meters driven (emissions)

    @property
    def idle(self):
        return not self.scheduled

    def effective_position(self):
        """(node to route from, meters to reach it). Mid-edge vehicles must
        finish the current edge first."""
        if self.edge_to is not None:
            return self.edge_to, self.edge_remaining
        return self.node, 0.0

    def dist_to(self, network: RoadNetwork, target):
        start, offset = self.effective_position()
        d = network.distance(start, target)
        return None if d is None else d + offset


def schedule_metrics(network, vehicle: VehicleState, schedule):
    """Walk a candidate schedule from the vehicle's current position.

    Returns ``(total_distance, in_vehicle, capacity_ok)`` where in_vehicle
    maps order_id to the in-vehicle meters the schedule implies (ridden-so-far
    plus remaining for onboard customers, pickup-to-dropoff for the rest), or
    None when some consecutive stop pair is unreachable.
    """
    start, offset = vehicle.effective_position()
    cum = offset
    pos = start
    pickup_cum = {}
    in_vehicle = {}
    occupancy = len(vehicle.onboard)
    capacity_ok = True
    for stop in schedule:
        d = network.distance(pos, stop.node)
        if d is None:
            return None
        cum += d
        pos = stop.node
        if stop.kind == "pickup":
            occupancy += 1
            if occupancy > CAPACITY:
                capacity_ok = False
            pickup_cum[stop.order_id] = cum
        else:
            occupancy -= 1
            if stop.order_id in pickup_cum:
                in_vehicle[stop.order_id] = cum - pickup_cum[stop.order_id]
            elif stop.order_id in vehicle.onboard:
                # already riding: meters so far plus everything until dropoff
                in_vehicle[stop.order_id] = vehicle.onboard[stop.order_id] + cum
            else:
                return None  # dropoff without a pickup
    return cum, in_vehicle, capacity_ok


def _interleaved_orderings(r1: Order, r2: Order):
    """Stop orderings where both customers are onboard for some segment."""
    p1 = Stop("pickup", r1.order_id, r1.origin)
    d1 = Stop("dropoff", r1.order_id, r1.destination)
    p2 = Stop("pickup", r2.order_id, r2.origin)
    d2 = Stop("dropoff", r2.order_id, r2.destination)
    return [
        (p1, p2, d1, d2),
        (p1, p2, d2, d1),
        (p2, p1, d1, d2),
        (p2, p1, d2, d1),
    ]


def pool_feasible(network: RoadNetwork, max_detour: float, r1: Order, r2: Order):
    """Best pooled stop ordering for two requests, or None when infeasible.

    The vehicle is assumed to start at the first pickup. Returns
    ``(stops, route_distance, detours, shared_distance)`` minimizing the total
    route distance over orderings whose per-customer in-vehicle detour ratios
    both stay within ``max_detour`` and that actually overlap (positive
    shared distance — back-to-back serving is not pooling).
    """
    if max_detour <= 0:
        raise ValueError("max_detour must be > 0")
    best = None
    originals = {r1.order_id: r1.trip_distance, r2.order_id: r2.trip_distance}
    for stops in _interleaved_orderings(r1, r2):
        legs = []
        ok = True
        for a, b in zip(stops, stops[1:]):
            d = network.distance(a.node, b.node)
            if d is None:
                ok = False
                break
            legs.append(d)
        if not ok:
            continue
        total = sum(legs)
        # second pickup .. first dropoff is the segment with both onboard
        shared = legs[1]
        if shared <= 0:
            continue
        cum = [0.0]
        for leg in legs:
            cum.append(cum[-1] + leg)
        pick = {s.order_id: cum[i] for i, s in enumerate(stops) if s.kind == "pickup"}
        drop = {s.order_id: cum[i] for i, s in enumerate(stops) if s.kind == "dropoff"}
        detours = {}
        feasible = True
        for oid in originals:
            inveh = drop[oid] - pick[oid]
            ratio = (inveh - originals[oid]) / originals[oid]
            detours[oid] = max(ratio, 0.0)
            if ratio > max_detour + 1e-9:
                feasible = False
                break
        if not feasible:
            continue
        key = (total, tuple((s.kind, str(s.order_id)) for s in stops))
        if best is None or key < best[0]:
            best = (key, stops, total, detours, shared)
    if best is None:
        return None
    _, stops, total, detours, shared = best
    return list(stops), total, detours, shared


def insertion_feasible(network: RoadNetwork, max_detour: float,
                       vehicle: VehicleState, r: Order, originals):
    """Cheapest insertion of one request into a vehicle's schedule, or None.

    ``originals`` maps already-scheduled order_ids to their shortest trip
    distances. Tries every precedence-preserving position for the pickup and
    dropoff, keeps capacity at 2, and requires every customer's in-vehicle
    detour (the new one and all already-scheduled ones) within ``max_detour``.
    Returns ``(new_schedule, added_distance, detours)``.
    """
    if max_detour <= 0:
        raise ValueError("max_detour must be > 0")
    old = schedule_metrics(network, vehicle, vehicle.schedule)
    if old is None:
        return None
    old_dist = old[0]
    pick = Stop("pickup", r.order_id, r.origin)
    drop = Stop("dropoff", r.order_id, r.destination)
    n = len(vehicle.schedule)
    best = None
    for i in range(n + 1):
        for j in range(i, n + 1):
            sched = list(vehicle.schedule)
            sched.insert(i, pick)
            sched.insert(j + 1, drop)
            result = schedule_metrics(network, vehicle, sched)
            if result is None:
                continue
            total, in_vehicle, capacity_ok = result
            if not capacity_ok:
                continue
            detours = {}
            feasible = True
            targets = dict(originals)
            targets[r.order_id] = r.trip_distance
            for oid, orig in targets.items():
                inveh = in_vehicle.get(oid)
                if inveh is None:
                    feasible = False
                    break
                ratio = (inveh - orig) / orig
                detours[oid] = max(ratio, 0.0)
                if ratio > max_detour + 1e-9:
                    feasible = False
                    break
            if not feasible:
                continue
            added = total - old_dist
            key = (added, i, j)
            if best is None or key < best[0]:
                best = (key, sched, added, detours)
    if best is None:
        return None
    _, sched, added, detours = best
    return sched, added, detours


@dataclass
class CandidateTrip:
    """A feasible (trip, vehicle) assignment option with price, cost, utility."""

    trip_id: int
    order_ids: tuple
    vehicle_id: object
    kind: str                 # "solo" | "share_single" | "pair" | "insertion"
    stops: list               # full new schedule for the vehicle
    price: float              # w_i
    cost: float               # c_ij
    added_distance: float
    detours: dict = field(default_factory=dict)
    shared_distance: float = 0.0

    @property
    def utility(self):
        return self.price - self.cost


@dataclass
class AssignmentSolution:
    chosen: list              # CandidateTrips
    objective: float
    optimal: bool = True      # False when the solver budget was exhausted


def order_fare(pricing: PricingParams, order: Order, choice: ServiceChoice):
    if choice is ServiceChoice.SHARE:
        return share_fare(pricing, order.trip_distance)
    return solo_fare(pricing, order.trip_distance)


def enumerate_candidate_trips(batch, vehicles, network: RoadNetwork,
                              max_detour, pricing: PricingParams,
                              cost_per_km=0.5, trip_originals=None,
                              scheduled_choices=None):
    """All feasible (trip, vehicle) candidates for one batch.

    ``batch`` is a list of (Order, ServiceChoice). Solo choosers pair only
    with idle vehicles; Share choosers additionally with partially occupied
    vehicles via en-route insertion, and with each other (pairs on idle
    vehicles). ``trip_originals`` maps already-scheduled order_ids to shortest
    trip distances for insertion detour checks; ``scheduled_choices`` maps
    them to their service choice — a vehicle carrying a Solo customer is
    never an insertion target (that customer rides alone).

    Cost is ``cost_per_km`` times the vehicle distance added to serve the
    trip from its current position (deadhead included).
    """
    trip_originals = trip_originals or {}
    scheduled_choices = scheduled_choices or {}
    batch = sorted(batch, key=lambda oc: str(oc[0].order_id))
    vehicles = sorted(vehicles, key=lambda v: str(v.vehicle_id))
    idle = [v for v in vehicles if v.idle]
    partially = [
        v for v in vehicles
        if 0 < len(v.scheduled) < CAPACITY
        and all(scheduled_choices.get(oid) is ServiceChoice.SHARE
                for oid in v.scheduled)
    ]
    candidates = []
    tid = itertools.count()

    def cost_of(meters):
        return cost_per_km * meters / 1000.0

    for order, choice in batch:
        fare = order_fare(pricing, order, choice)
        for v in idle:
            deadhead = v.dist_to(network, order.origin)
            if deadhead is None:
                continue
            stops = [Stop("pickup", order.order_id, order.origin),
                     Stop("dropoff", order.order_id, order.destination)]
            added = deadhead + order.trip_distance
            candidates.append(CandidateTrip(
                trip_id=next(tid), order_ids=(order.order_id,),
                vehicle_id=v.vehicle_id,
                kind="solo" if choice is ServiceChoice.SOLO else "share_single",
                stops=stops, price=fare, cost=cost_of(added),
                added_distance=added, detours={order.order_id: 0.0}))
        if choice is ServiceChoice.SHARE:
            for v in partially:
                res = insertion_feasible(network, max_detour, v, order,
                                         {oid: trip_originals[oid] for oid in v.scheduled})
                if res is None:
                    continue
                sched, added, detours = res
                candidates.append(CandidateTrip(
                    trip_id=next(tid), order_ids=(order.order_id,),
                    vehicle_id=v.vehicle_id, kind="insertion",
                    stops=sched, price=fare, cost=cost_of(added),
                    added_distance=added, detours=detours))

    share = [(o, c) for o, c in batch if c is ServiceChoice.SHARE]
    for (r1, _), (r2, _) in itertools.combinations(share, 2):
        pooled = pool_feasible(network, max_detour, r1, r2)
        if pooled is None:
            continue
        stops, route_dist, detours, shared = pooled
        price = order_fare(pricing, r1, ServiceChoice.SHARE) + \
            order_fare(pricing, r2, ServiceChoice.SHARE)
        for v in idle:
            deadhead = v.dist_to(network, stops[0].node)
            if deadhead is None:
                continue
            added = deadhead + route_dist
            candidates.append(CandidateTrip(
                trip_id=next(tid), order_ids=(r1.order_id, r2.order_id),
                vehicle_id=v.vehicle_id, kind="pair",
                stops=list(stops), price=price, cost=cost_of(added),
                added_distance=added, detours=dict(detours),
                shared_distance=shared))
    return candidates


def trip_utility(trip: CandidateTrip):
    return trip.utility


def _greedy_solution(candidates):
    chosen, used_v, used_o = [], set(), set()
    for c in sorted(candidates, key=lambda c: (-c.utility, c.trip_id)):
        if c.utility <= 0:
            break
        if c.vehicle_id in used_v or any(o in used_o for o in c.order_ids):
            continue
        chosen.append(c)
        used_v.add(c.vehicle_id)
        used_o.update(c.order_ids)
    return chosen


def solve_assignment(candidates, time_budget_s=1.0, node_budget=20000):
    """Exact maximization of total utility over candidate trips.

    One trip per vehicle, one vehicle per customer (weighted set packing on
    the conflict structure). Branch-and-bound over vehicles with a greedy
    incumbent; the bound sums, for each undecided vehicle, its best
    candidate that avoids the orders already used. Search effort is capped
    by a deterministic node budget (so identical inputs always yield
    identical outputs) with the wall-clock budget as a backstop; on
    exhaustion the incumbent is returned and flagged. Deterministic for a
    fixed candidate list.
    """
    if not candidates:
        return AssignmentSolution(chosen=[], objective=0.0)
    # a trip with u <= 0 never improves the objective (dropping it stays
    # feasible), so only positive-utility candidates enter the search
    positive = [c for c in candidates if c.utility > 0]
    deadline = time.monotonic() + time_budget_s
    budget = {"nodes": node_budget, "exhausted": False}
    chosen = []
    objective = 0.0
    # candidates conflict only through shared vehicles or orders; connected
    # components of that graph are independent sub-problems
    for comp in _conflict_components(positive):
        sol_c, obj_c = _solve_component(comp, deadline, budget)
        chosen.extend(sol_c)
        objective += obj_c
    return AssignmentSolution(chosen=sorted(chosen, key=lambda c: c.trip_id),
                              objective=objective,
                              optimal=not budget["exhausted"])


def _conflict_components(candidates):
    """Group candidates sharing a vehicle or an order; deterministic order."""
    parent = {}

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[rb] = ra

    for c in candidates:
        keys = [("v", c.vehicle_id)] + [("o", o) for o in c.order_ids]
        for k in keys:
            parent.setdefault(k, k)
        for k in keys[1:]:
            union(keys[0], k)
    groups = {}
    for c in sorted(candidates, key=lambda c: c.trip_id):
        groups.setdefault(find(("v", c.vehicle_id)), []).append(c)
    return [groups[k] for k in sorted(groups, key=str)]


def _solve_component(candidates, deadline, budget):
    """Branch-and-bound over one conflict component's vehicles."""
    by_vehicle = {}
    for c in candidates:
        by_vehicle.setdefault(c.vehicle_id, []).append(c)
    lists = []
    for vid in sorted(by_vehicle, key=str):
        cs = sorted(by_vehicle[vid], key=lambda c: (-c.utility, c.trip_id))
        lists.append([(c, frozenset(c.order_ids)) for c in cs])
    # strongest vehicles first: good solutions early, tighter pruning
    lists.sort(key=lambda cs: (-cs[0][0].utility, cs[0][0].trip_id))
    n = len(lists)

    incumbent = _greedy_solution(candidates)
    best_obj = sum(c.utility for c in incumbent)
    best = list(incumbent)

    def bound(vi, used):
        # best compatible candidate per undecided vehicle, ignoring
        # conflicts among the undecided vehicles themselves
        total = 0.0
        for k in range(vi, n):
            for c, orders in lists[k]:
                if not (orders & used):
                    total += c.utility
                    break
        return total

    def dfs(vi, obj, picked, used):
        nonlocal best_obj, best
        budget["nodes"] -= 1
        if budget["nodes"] <= 0:
            budget["exhausted"] = True
        elif budget["nodes"] % 256 == 0 and time.monotonic() > deadline:
            budget["exhausted"] = True
        if budget["exhausted"]:
            return
        if vi == n:
            if obj > best_obj + 1e-12:
                best_obj = obj
                best = list(picked)
            return
        if obj + bound(vi, used) <= best_obj + 1e-12:
            return
        for c, orders in lists[vi]:
            if orders & used:
                continue
            picked.append(c)
            dfs(vi + 1, obj + c.utility, picked, used | orders)
            picked.pop()
            if budget["exhausted"]:
                return
        dfs(vi + 1, obj, picked, used)

    depth_needed = n + 64
    if sys.getrecursionlimit() < depth_needed:
        sys.setrecursionlimit(depth_needed + 1000)
    if not budget["exhausted"]:
        dfs(0, 0.0, [], frozenset())
    return best, best_obj


def reposition_idle(idle_vehicles, waiting_orders, network: RoadNetwork):
    """Min-total-pickup-distance one-to-one pairing of idle vehicles with
    waiting unmatched requests. Returns [(vehicle_id, target_origin_node)]."""
    vehicles = sorted(idle_vehicles, key=lambda v: str(v.vehicle_id))
    orders = sorted(waiting_orders, key=lambda o: str(o.order_id))
    if not vehicles or not orders:
        return []
    cost = np.full((len(vehicles), len(orders)), UNREACHABLE)
    for i, v in enumerate(vehicles):
        for j, o in enumerate(orders):
            d = v.dist_to(network, o.origin)
            if d is not None:
                cost[i, j] = d
    rows, cols = linear_sum_assignment(cost)
    moves = []
    for i, j in zip(rows, cols):
        if cost[i, j] >= UNREACHABLE:
            continue
        moves.append((vehicles[i].vehicle_id, orders[j].origin))
    return moves
