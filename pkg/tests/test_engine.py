"""Simulation loop: hand traces, motion sub-ticks, conservation,
determinism, and the pure-solo equivalence."""

import numpy as np
import pytest

from poolsim import synth
from poolsim.demand import ElasticityTable, Order, ServiceChoice
from poolsim.engine import (
    SimConfig, Simulation, SimulationError, TripRecord, init_fleet,
    run_simulation,
)
from poolsim.matching import Stop, VehicleState
from poolsim.pricing import PricingParams, solo_fare

from conftest import make_order


@pytest.fixture(scope="module")
def table():
    return ElasticityTable.default()


def small_cfg(**kw):
    base = dict(horizon_start=0.0, horizon_end=1800.0, tail=900.0,
                fleet_size=1, max_detour=0.3, seed=0,
                pricing=PricingParams(discount=0.0))
    base.update(kw)
    return SimConfig(**base)


def _run_city(table, theta, seed, rate=300.0, horizon=3600.0, fleet=30,
              pure_solo=False):
    net = synth.grid_network(10, 10, 500.0)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    orders = synth.uniform_weights(net)
    from poolsim.demand import generate_synthetic_orders
    orders = generate_synthetic_orders(net, horizon, rate, orders, rng,
                                       min_distance_m=500.0, start_s=21600.0)
    cfg = SimConfig(horizon_start=21600.0, horizon_end=21600.0 + horizon,
                    fleet_size=fleet, max_detour=0.3,
                    pricing=PricingParams(discount=theta), seed=seed,
                    pure_solo=pure_solo)
    return run_simulation(cfg, orders, net, table), orders


# -- config validation -----------------------------------------------------

def test_config_validation():
    with pytest.raises(SimulationError):
        small_cfg(horizon_end=0.0)
    with pytest.raises(SimulationError):
        small_cfg(max_detour=0.0)
    with pytest.raises(SimulationError):
        small_cfg(fleet_size=0)


# -- hand traces -----------------------------------------------------------

def test_zero_orders(line_net, table):
    cfg = small_cfg()
    res = run_simulation(cfg, [], line_net, table)
    assert res.records == [] and res.admitted == 0
    assert res.total_fleet_distance == 0.0
    assert all(e["type"] not in ("pickup", "dropoff") for e in res.events)


def test_single_order_co_located_vehicle(line_net, table):
    cfg = small_cfg(vehicle_speed=10.0)
    order = make_order(line_net, "o", "A", "C", t=10.0)
    v = VehicleState("v", "A")
    res = run_simulation(cfg, [order], line_net, table, vehicles=[v])
    rec, = res.records
    assert rec.outcome == "delivered"
    assert rec.choice is ServiceChoice.SOLO
    assert rec.fare == pytest.approx(solo_fare(cfg.pricing, 2000.0))
    assert rec.pickup_time == pytest.approx(0.0)
    assert not rec.pooled and rec.shared_distance == 0.0
    drop = next(e for e in res.events if e["type"] == "dropoff")
    pick = next(e for e in res.events if e["type"] == "pickup")
    # matched at the first batch boundary after arrival (t = 30)
    assert pick["time_s"] == pytest.approx(30.0)
    assert drop["time_s"] == pytest.approx(30.0 + 2000.0 / 10.0)


def test_unserved_order_abandons_after_timeout(table):
    from poolsim.netgraph import RoadNetwork
    # the only vehicle sits on an isolated node and can never reach the order
    net = RoadNetwork([("A", 0, 0), ("B", 0.001, 0), ("Z", 0.01, 0)],
                      [("A", "B", 1000.0), ("B", "A", 1000.0)])
    cfg = small_cfg(abandonment_timeout=120.0)
    order = Order("o", "A", "B", 0.0, 1000.0)
    far = VehicleState("v", "Z")
    res = run_simulation(cfg, [order], net, table, vehicles=[far])
    rec = next(r for r in res.records if r.order_id == "o")
    assert rec.outcome == "abandoned"
    assert rec.fare == 0.0
    ab = next(e for e in res.events if e["type"] == "abandon")
    assert ab["time_s"] - order.request_time > 120.0


def test_unsorted_orders_rejected(line_net, table):
    orders = [make_order(line_net, "a", "A", "B", t=50.0),
              make_order(line_net, "b", "A", "B", t=10.0)]
    with pytest.raises(SimulationError):
        Simulation(small_cfg(), orders, line_net, table)


# -- motion ticks ----------------------------------------------------------

def _bare_sim(net, table, **cfg_kw):
    sim = Simulation(small_cfg(**cfg_kw), [], net, table,
                     vehicles=[VehicleState("v", "A")])
    return sim, sim.vehicles["v"]


def _fake_record(sim, oid, dist, t):
    rec = TripRecord(order_id=oid, choice=ServiceChoice.SOLO, outcome="matched",
                     request_time=t, original_distance=dist)
    rec._admit_t = t
    rec._match_t = t
    sim.records[oid] = rec
    sim._odometer_marks[oid] = [None, None]
    return rec


def test_stop_fires_subtick(table):
    from poolsim.netgraph import RoadNetwork
    net = RoadNetwork([("A", 0, 0), ("B", 0.0001, 0)],
                      [("A", "B", 10.0), ("B", "A", 10.0)])
    sim, v = _bare_sim(net, table, vehicle_speed=5.0)
    _fake_record(sim, "o", 10.0, sim.now)
    v.schedule = [Stop("pickup", "o", "B")]
    v.scheduled = {"o"}
    v.plan = [("move", "A", "B", 10.0), ("stop", Stop("pickup", "o", "B"))]
    sim.step(4.0)
    pick = next(e for e in sim.events if e["type"] == "pickup")
    assert pick["time_s"] == pytest.approx(2.0)  # 10 m at 5 m/s
    assert v.total_distance == pytest.approx(10.0)


def test_two_stops_in_one_tick(table):
    from poolsim.netgraph import RoadNetwork
    net = RoadNetwork([("A", 0, 0), ("B", 0.0001, 0), ("C", 0.0002, 0)],
                      [("A", "B", 5.0), ("B", "C", 5.0)])
    sim, v = _bare_sim(net, table, vehicle_speed=5.0)
    _fake_record(sim, "o", 10.0, sim.now)
    stops = [Stop("pickup", "o", "B"), Stop("dropoff", "o", "C")]
    v.schedule = list(stops)
    v.scheduled = {"o"}
    v.plan = [("move", "A", "B", 5.0), ("stop", stops[0]),
              ("move", "B", "C", 5.0), ("stop", stops[1])]
    sim.step(10.0)
    pick = next(e for e in sim.events if e["type"] == "pickup")
    drop = next(e for e in sim.events if e["type"] == "dropoff")
    assert pick["time_s"] == pytest.approx(1.0)
    assert drop["time_s"] == pytest.approx(2.0)
    assert sim.records["o"].outcome == "delivered"
    assert sim.records["o"].in_vehicle_distance == pytest.approx(5.0)


def test_idle_vehicle_does_not_move(line_net, table):
    sim, v = _bare_sim(line_net, table)
    sim.step(60.0)
    assert v.node == "A" and v.total_distance == 0.0


# -- fleet init ------------------------------------------------------------

def test_fleet_all_on_one_node(line_net):
    cfg = small_cfg(fleet_size=7)
    fleet = init_fleet(cfg, {"A": 1.0}, line_net, np.random.default_rng(0))
    assert len(fleet) == 7 and all(v.node == "A" for v in fleet)


def test_fleet_multinomial_split(line_net):
    cfg = small_cfg(fleet_size=500)
    fleet = init_fleet(cfg, {"A": 0.8, "B": 0.2}, line_net,
                       np.random.default_rng(3))
    at_a = sum(v.node == "A" for v in fleet)
    sigma = (500 * 0.8 * 0.2) ** 0.5
    assert abs(at_a - 400) < 3 * sigma


# -- whole-run invariants --------------------------------------------------

@pytest.fixture(scope="module")
def city_run(table):
    return _run_city(table, 0.2, seed=4)


def test_conservation(city_run):
    res, _ = city_run
    assert res.admitted == len(res.records)
    assert all(r.outcome in ("delivered", "abandoned") for r in res.records)


def test_detour_guarantee(city_run):
    res, _ = city_run
    for r in res.records:
        if r.outcome == "delivered" and r.pooled:
            assert r.detour_distance / r.original_distance <= 0.3 + 1e-9


def test_pooled_implies_share_choice(city_run):
    res, _ = city_run
    for r in res.records:
        if r.pooled:
            assert r.choice is ServiceChoice.SHARE


def test_capacity_never_exceeded(city_run):
    res, _ = city_run
    assert all(n <= 2 for snap in res.scheduled_snapshots for n in snap)


def test_matching_time_bound(city_run):
    res, _ = city_run
    cfg = res.config
    for r in res.records:
        if r.outcome == "delivered":
            assert r.matching_time <= cfg.abandonment_timeout + 1e-9


def test_event_clock_monotone(city_run):
    res, _ = city_run
    times = [e["time_s"] for e in res.events]
    assert times == sorted(times)


def test_no_teleportation(city_run):
    res, _ = city_run
    net = synth.grid_network(10, 10, 500.0)
    cfg = res.config
    slack = 500.0  # sampled positions trail by at most one block
    by_vehicle = {}
    for t, sample in res.fleet_samples:
        for vid, node in sample:
            by_vehicle.setdefault(vid, []).append((t, node))
    for trace in by_vehicle.values():
        for (t0, n0), (t1, n1) in zip(trace, trace[1:]):
            d = net.distance(n0, n1)
            assert d is not None
            assert d <= (t1 - t0) * cfg.vehicle_speed + slack + 1e-6


def test_repeat_run_byte_identical(table):
    a, _ = _run_city(table, 0.2, seed=8, rate=200.0, horizon=1800.0, fleet=15)
    b, _ = _run_city(table, 0.2, seed=8, rate=200.0, horizon=1800.0, fleet=15)
    assert a.events_jsonl() == b.events_jsonl()


def test_theta_zero_equals_pure_solo(table):
    mixed, _ = _run_city(table, 0.0, seed=6, rate=200.0, horizon=1800.0, fleet=15)
    solo, _ = _run_city(table, 0.0, seed=6, rate=200.0, horizon=1800.0, fleet=15,
                        pure_solo=True)
    assert mixed.events_jsonl() == solo.events_jsonl()
    assert all(r.choice is ServiceChoice.SOLO for r in mixed.records)


def test_order_before_horizon_rejected(line_net, table):
    cfg = small_cfg(horizon_start=100.0, horizon_end=400.0)
    order = make_order(line_net, "o", "A", "B", t=10.0)
    sim = Simulation(cfg, [order], line_net, table,
                     vehicles=[VehicleState("v", "A")])
    with pytest.raises(SimulationError):
        sim.run()
