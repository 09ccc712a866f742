"""Flat key-value run configuration.

The config file is plain ``key = value`` lines (``#`` comments, blank lines
ignored); lists are comma-separated. No schema language, trivially diffable.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

from .demand import ElasticityTable
from .engine import SimConfig
from .pricing import PricingParams


class ConfigError(Exception):
    pass


DEFAULT_DISCOUNTS = [0.0, 0.1, 0.15, 0.2, 0.3, 0.4]
DEFAULT_DETOURS = [0.2, 0.3, 0.4]


def parse_flat_file(path):
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text):
    return [int(x) for x in text.split(",") if x.strip()]


@dataclass
class ExperimentGrid:
    """One demand profile crossed with discount/detour/seed grids.

    Discount-0 cells are pure-solo baselines; they are run once per seed and
    referenced by every detour value. Scenario labels follow C2-D<detour%>.
    """

    profile: str
    discounts: list
    detours: list
    seeds: list
    base_config: SimConfig
    network_nodes: str = None
    network_edges: str = None
    grid_nx: int = 10
    grid_ny: int = 10
    grid_spacing_m: float = 500.0
    orders_csv: str = None
    sample_fraction: float = 1.0
    arrival_rate_per_h: float = 600.0
    min_trip_m: float = 0.0
    elasticity_csv: str = None
    emission_mode: str = "constant"
    emission_factor: float = 200.0
    config_text: str = ""

    def __post_init__(self):
        if not self.discounts:
            raise ConfigError("discounts list must not be empty")
        if not self.detours:
            raise ConfigError("detours list must not be empty")
        if not self.seeds:
            raise ConfigError("seeds list must not be empty")

    def elasticity(self):
        if self.elasticity_csv:
            return ElasticityTable.from_csv(self.elasticity_csv)
        return ElasticityTable.default()

    def cells(self):
        """(discount, detour, seed) triples; discount-0 deduplicated per seed
        to a single run keyed by the first detour value."""
        runs = []
        for seed in self.seeds:
            for theta in self.discounts:
                if theta == 0:
                    runs.append((theta, None, seed))
                    continue
                for detour in self.detours:
                    runs.append((theta, detour, seed))
        return runs


def load_experiment(path):
    raw = parse_flat_file(path)
    with open(path, encoding="utf-8") as fh:
        text = fh.read()

    def get(key, default=None):
        return raw.get(key, default)

    seeds = _ints(get("seeds", "0"))
    env_seed = os.environ.get("SIM_SEED")
    if env_seed is not None:
        seeds = [int(env_seed)]
    pricing = PricingParams(
        base_fare=float(get("base_fare", 4.0)),
        per_km=float(get("per_km_fare", 3.0)),
        min_fare=float(get("min_fare", 10.0)),
        discount=0.0,
        pooled_trip_subsidy=float(get("pooled_trip_subsidy", 0.0)),
    )
    base = SimConfig(
        batch_interval=float(get("batch_interval_s", 30.0)),
        vehicle_speed=float(get("vehicle_speed_mps", 8.33)),
        horizon_start=float(get("horizon_start_s", 21600.0)),
        horizon_end=float(get("horizon_end_s", 43200.0)),
        tail=float(get("tail_s", 2700.0)),
        abandonment_timeout=float(get("abandonment_timeout_s", 600.0)),
        fleet_size=int(get("fleet_size", 500)),
        max_detour=0.3,
        pricing=pricing,
        seed=seeds[0],
        cost_per_km=float(get("cost_per_km", 0.5)),
        solver_budget_s=float(get("solver_budget_s", 1.0)),
    )
    grid_spec = get("grid_network", "10x10:500")
    try:
        dims, spacing = grid_spec.split(":")
        nx, ny = dims.lower().split("x")
        nx, ny, spacing = int(nx), int(ny), float(spacing)
    except ValueError:
        raise ConfigError(f"bad grid_network spec {grid_spec!r}") from None
    discounts = _floats(get("discounts", ",".join(map(str, DEFAULT_DISCOUNTS))))
    detours = _floats(get("detours", ",".join(map(str, DEFAULT_DETOURS))))
    return ExperimentGrid(
        profile=get("profile", "synthetic"),
        discounts=discounts, detours=detours, seeds=seeds,
        base_config=base,
        network_nodes=get("network_nodes"), network_edges=get("network_edges"),
        grid_nx=nx, grid_ny=ny, grid_spacing_m=spacing,
        orders_csv=get("orders_csv"),
        sample_fraction=float(get("sample_fraction", 1.0)),
        arrival_rate_per_h=float(get("arrival_rate_per_h", 600.0)),
        min_trip_m=float(get("min_trip_m", 0.0)),
        elasticity_csv=get("elasticity_csv"),
        emission_mode=get("emission_mode", "constant"),
        emission_factor=float(get("emission_factor", 200.0)),
        config_text=text,
    )
