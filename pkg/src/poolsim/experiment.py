"""Experiment-grid orchestration, result persistence, and chart rendering."""

from __future__ import annotations

import csv
import hashlib
import json
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import synth
from .config import ExperimentGrid
from .demand import generate_synthetic_orders, ingest_orders
from .engine import demand_node_weights, run_simulation
from .metrics import EmissionModel, aggregate_metrics, zone_stats
from .netgraph import load_network

METRIC_COLUMNS = [
    "revenue", "service_rate", "avg_scheduled_requests", "emission_factor",
    "mean_matching_time", "mean_pickup_time", "ssr", "sdr", "ddr",
    "sdr_mean_of_ratios", "ddr_mean_of_ratios", "mean_saved_distance",
    "mean_saved_co2", "admitted", "delivered", "abandoned", "share_choosers",
    "pooled_customers", "total_fleet_km", "total_co2_kg",
]


def build_network(grid: ExperimentGrid):
    if grid.network_nodes and grid.network_edges:
        return load_network(grid.network_nodes, grid.network_edges)
    return synth.grid_network(grid.grid_nx, grid.grid_ny, grid.grid_spacing_m)


def build_orders(grid: ExperimentGrid, network, seed):
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 7]))
    if grid.orders_csv:
        orders, _ = ingest_orders(grid.orders_csv, network,
                                  sample_fraction=grid.sample_fraction, rng=rng)
        return orders
    cfg = grid.base_config
    return generate_synthetic_orders(
        network, cfg.horizon_end - cfg.horizon_start, grid.arrival_rate_per_h,
        synth.uniform_weights(network), rng, min_distance_m=grid.min_trip_m,
        start_s=cfg.horizon_start)


def run_cell(grid: ExperimentGrid, theta, detour, seed, emit_events=False,
             out_dir=None):
    """One simulation run; returns (metrics_row_fragment, run_result)."""
    network = build_network(grid)
    orders = build_orders(grid, network, seed)
    effective_detour = detour if detour is not None else grid.detours[0]
    config = replace(
        grid.base_config,
        max_detour=effective_detour,
        pricing=replace(grid.base_config.pricing, discount=theta),
        seed=int(seed),
        pure_solo=(theta == 0),
    )
    weights = demand_node_weights(orders, network)
    result = run_simulation(config, orders, network, grid.elasticity(),
                            init_weights=weights)
    model = EmissionModel(mode=grid.emission_mode,
                          constant_factor=grid.emission_factor)
    metrics = aggregate_metrics(result, model)
    if emit_events and out_dir:
        label = _cell_label(grid.profile, theta, detour, seed)
        with open(os.path.join(out_dir, f"events_{label}.jsonl"), "w",
                  encoding="utf-8") as fh:
            fh.write(result.events_jsonl())
    cells, per_class = zone_stats(result, network)
    return metrics, cells, per_class, result


def _cell_label(profile, theta, detour, seed):
    d = "solo" if detour is None else f"D{int(round(detour * 100))}"
    return f"{profile}_t{theta:g}_{d}_s{seed}"


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def run_experiment_grid(grid: ExperimentGrid, out_dir, emit_events=False,
                        jobs=1):
    """Run every grid cell, write metrics.csv / zones.csv / manifest.json.

    Discount-0 baselines run once per seed and are referenced by every
    detour. Per-cell failures are recorded and the grid continues; returns
    the list of failures (empty on full success).
    """
    os.makedirs(out_dir, exist_ok=True)
    cells = grid.cells()
    results = {}
    failures = []

    def submit_all(executor):
        futs = {}
        for theta, detour, seed in cells:
            futs[(theta, detour, seed)] = executor.submit(
                run_cell, grid, theta, detour, seed, emit_events, out_dir)
        return futs

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = submit_all(pool)
            for key, fut in futs.items():
                try:
                    results[key] = fut.result()
                except Exception as exc:  # cell failure: record, continue
                    failures.append({"cell": key, "error": str(exc)})
    else:
        for key in cells:
            try:
                results[key] = run_cell(grid, *key, emit_events, out_dir)
            except Exception as exc:
                failures.append({"cell": key, "error": str(exc)})

    metrics_rows = []
    zone_rows = []
    for seed in grid.seeds:
        for theta in sorted(set(grid.discounts)):
            for detour in grid.detours:
                key = (theta, None, seed) if theta == 0 else (theta, detour, seed)
                if key not in results:
                    continue
                metrics, cells_out, per_class, _ = results[key]
                row = {
                    "profile": grid.profile,
                    "discount": theta,
                    "detour": detour,
                    "scenario": "pure-solo" if theta == 0
                                else f"C2-D{int(round(detour * 100))}",
                    "seed": seed,
                }
                row.update({k: getattr(metrics, k) for k in METRIC_COLUMNS})
                metrics_rows.append(row)
                if theta != 0 or detour == grid.detours[0]:
                    for cell in cells_out:
                        zr = {"profile": grid.profile, "discount": theta,
                              "detour": detour, "seed": seed}
                        zr.update(cell)
                        zone_rows.append(zr)

    metrics_rows.sort(key=lambda r: (r["profile"], r["discount"], r["detour"],
                                     r["seed"]))
    _write_csv(os.path.join(out_dir, "metrics.csv"),
               ["profile", "discount", "detour", "scenario", "seed"] + METRIC_COLUMNS,
               metrics_rows)
    _write_csv(os.path.join(out_dir, "zones.csv"),
               ["profile", "discount", "detour", "seed", "cell_i", "cell_j",
                "slot", "lambda_per_h", "mean_distance_km", "vehicles",
                "speed_kmh", "load", "zone_class", "ssr", "sdr", "ddr",
                "share_choosers"],
               zone_rows)
    manifest = {
        "config_sha256": hashlib.sha256(grid.config_text.encode()).hexdigest(),
        "profile": grid.profile,
        "discounts": grid.discounts,
        "detours": grid.detours,
        "seeds": grid.seeds,
        "cells": [list(c) for c in cells],
        "failures": failures,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return failures


def _write_csv(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in columns])


# -- charts ----------------------------------------------------------------

CHART_METRICS = ["revenue", "service_rate", "avg_scheduled_requests",
                 "emission_factor", "mean_matching_time", "mean_pickup_time",
                 "ssr", "sdr", "ddr"]


def render_charts(metrics_csv, out_dir, zones_csv=None):
    """Render metric-vs-discount lines per detour, the percentage-change bar
    chart at discount 0.2 / detour 0.3 against the pure-solo baseline, and a
    zone-class sharing panel when zones.csv is supplied. Returns the list of
    written SVG paths."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = _read_csv(metrics_csv)
    if not rows:
        raise ValueError(f"{metrics_csv}: no data rows")
    required = {"discount", "detour", "seed"} | set(CHART_METRICS)
    missing = required - set(rows[0])
    if missing:
        raise ValueError(f"{metrics_csv}: missing columns {sorted(missing)}")
    os.makedirs(out_dir, exist_ok=True)
    written = []
    detours = sorted({float(r["detour"]) for r in rows})
    for detour in detours:
        sub = [r for r in rows if float(r["detour"]) == detour]
        discounts = sorted({float(r["discount"]) for r in sub})
        for metric in CHART_METRICS:
            ys = [np.mean([float(r[metric]) for r in sub
                           if float(r["discount"]) == th]) for th in discounts]
            fig, ax = plt.subplots(figsize=(5, 3.5))
            ax.plot(discounts, ys, marker="o")
            ax.set_xlabel("discount")
            ax.set_ylabel(metric)
            ax.set_title(f"{metric} vs discount (detour {detour:g})")
            fig.tight_layout()
            path = os.path.join(out_dir,
                                f"{metric}_D{int(round(detour * 100))}.svg")
            fig.savefig(path)
            plt.close(fig)
            written.append(path)
    written += _percentage_chart(rows, out_dir, plt)
    if zones_csv:
        written += _zone_panel(zones_csv, out_dir, plt)
    return written


def _percentage_chart(rows, out_dir, plt):
    target = [r for r in rows if float(r["discount"]) == 0.2
              and float(r["detour"]) == 0.3]
    base = {r["seed"]: r for r in rows if float(r["discount"]) == 0.0
            and float(r["detour"]) == 0.3}
    if not target or not base:
        warnings.warn("baseline or target cell missing; percentage chart skipped")
        return []
    metrics = ["service_rate", "emission_factor", "avg_scheduled_requests",
               "revenue"]
    changes = {m: [] for m in metrics}
    changes["waiting_time"] = []
    for r in target:
        b = base.get(r["seed"])
        if b is None:
            continue
        for m in metrics:
            bv = float(b[m])
            if bv:
                changes[m].append((float(r[m]) - bv) / bv * 100.0)
        bw = float(b["mean_matching_time"]) + float(b["mean_pickup_time"])
        rw = float(r["mean_matching_time"]) + float(r["mean_pickup_time"])
        if bw:
            changes["waiting_time"].append((rw - bw) / bw * 100.0)
    labels = [m for m in changes if changes[m]]
    values = [float(np.mean(changes[m])) for m in labels]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(labels, values, color=["tab:green" if v >= 0 else "tab:red"
                                  for v in values])
    ax.axhline(0, color="black", linewidth=0.8)
    ax.set_ylabel("% change vs pure solo")
    ax.set_title("Mixed service at discount 0.2, detour 0.3")
    plt.setp(ax.get_xticklabels(), rotation=20, ha="right")
    fig.tight_layout()
    path = os.path.join(out_dir, "percentage_change.svg")
    fig.savefig(path)
    plt.close(fig)
    return [path]


def _zone_panel(zones_csv, out_dir, plt):
    rows = _read_csv(zones_csv)
    per_class = {}
    for r in rows:
        cls = r.get("zone_class")
        if cls:
            per_class.setdefault(cls, []).append(r)
    if not per_class:
        warnings.warn("no classified zones; zone panel skipped")
        return []
    classes = [c for c in ("cold", "normal", "hot") if c in per_class]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    width = 0.25
    xs = np.arange(len(classes))
    for k, metric in enumerate(("ssr", "sdr", "ddr")):
        vals = []
        for c in classes:
            cells = [r for r in per_class[c] if r.get(metric)]
            vals.append(np.mean([float(r[metric]) for r in cells]) if cells else 0.0)
        ax.bar(xs + (k - 1) * width, vals, width, label=metric.upper())
    ax.set_xticks(xs)
    ax.set_xticklabels(classes)
    ax.set_ylabel("ratio")
    ax.legend()
    ax.set_title("Sharing efficiency by zone class")
    fig.tight_layout()
    path = os.path.join(out_dir, "zone_classes.svg")
    fig.savefig(path)
    plt.close(fig)
    return [path]


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
