"""Command-line entry points: simulate, scenario, charts."""

from __future__ import annotations

import csv
import os
import sys

import click

from .config import ConfigError, load_experiment, parse_flat_file
from .experiment import render_charts, run_experiment_grid
from .scenario import revenue_ratio

DEFAULT_THETAS = [0.1, 0.2, 0.3, 0.4]
DEFAULT_FARE_RATIOS = [0.4, 0.7, 1.0]
DEFAULT_DIST_RATIOS = [round(1.0 + 0.05 * k, 2) for k in range(13)]


@click.group()
def main():
    """Urban ride-hailing market simulator (solo-hailing vs mixed pooling)."""


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True), help="flat key=value run config")
@click.option("--emit-events", is_flag=True, help="write per-run events.jsonl")
@click.option("--out", "out_dir", default="results", show_default=True)
@click.option("--jobs", default=1, show_default=True,
              help="parallel grid cells")
def simulate(config_path, emit_events, out_dir, jobs):
    """Run the experiment grid defined by a config file."""
    try:
        grid = load_experiment(config_path)
    except ConfigError as exc:
        raise click.ClickException(str(exc))
    failures = run_experiment_grid(grid, out_dir, emit_events=emit_events,
                                   jobs=jobs)
    click.echo(f"metrics written to {os.path.join(out_dir, 'metrics.csv')}")
    if failures:
        for f in failures:
            click.echo(f"FAILED cell {f['cell']}: {f['error']}", err=True)
        sys.exit(1)


@main.command()
@click.option("--grid", "grid_path", type=click.Path(exists=True),
              help="optional flat file with thetas/fare_ratios/dist_ratios")
@click.option("--out", "out_dir", default="scenario_out", show_default=True)
def scenario(grid_path, out_dir):
    """Emit the closed-form revenue-ratio surface (CSV plus contour SVG)."""
    thetas, fare_ratios, dist_ratios = (DEFAULT_THETAS, DEFAULT_FARE_RATIOS,
                                        DEFAULT_DIST_RATIOS)
    if grid_path:
        raw = parse_flat_file(grid_path)
        if "thetas" in raw:
            thetas = [float(x) for x in raw["thetas"].split(",")]
        if "fare_ratios" in raw:
            fare_ratios = [float(x) for x in raw["fare_ratios"].split(",")]
        if "dist_ratios" in raw:
            dist_ratios = [float(x) for x in raw["dist_ratios"].split(",")]
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "revenue_ratio.csv")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["theta", "fare_ratio", "dist_ratio", "revenue_ratio"])
        for fr in fare_ratios:
            for th in thetas:
                for dr in dist_ratios:
                    writer.writerow([th, fr, dr, repr(revenue_ratio(th, fr, dr))])
    svg_path = _scenario_contour(thetas, fare_ratios, dist_ratios, out_dir)
    click.echo(f"wrote {csv_path} and {svg_path}")


def _scenario_contour(thetas, fare_ratios, dist_ratios, out_dir):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import numpy as np

    fig, axes = plt.subplots(1, len(fare_ratios),
                             figsize=(4 * len(fare_ratios), 3.5), squeeze=False)
    dr = np.asarray(dist_ratios)
    th = np.asarray(thetas)
    for ax, fr in zip(axes[0], fare_ratios):
        grid = np.array([[revenue_ratio(t, fr, d) for d in dr] for t in th])
        cs = ax.contourf(dr, th, grid, levels=12, cmap="RdYlGn")
        ax.contour(dr, th, grid, levels=[1.0], colors="black", linewidths=1.5)
        ax.set_title(f"fare ratio {fr:g}")
        ax.set_xlabel("distance ratio")
        ax.set_ylabel("discount")
        fig.colorbar(cs, ax=ax)
    fig.tight_layout()
    path = os.path.join(out_dir, "revenue_ratio.svg")
    fig.savefig(path)
    plt.close(fig)
    return path


@main.command()
@click.option("--in", "metrics_csv", required=True, type=click.Path(exists=True))
@click.option("--zones", "zones_csv", type=click.Path(exists=True))
@click.option("--out", "out_dir", default="charts", show_default=True)
def charts(metrics_csv, zones_csv, out_dir):
    """Render line/bar charts from a metrics.csv (and optional zones.csv)."""
    try:
        written = render_charts(metrics_csv, out_dir, zones_csv=zones_csv)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    click.echo(f"wrote {len(written)} charts to {out_dir}")


if __name__ == "__main__":
    main()
