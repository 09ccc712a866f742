"""Synthetic grid networks and demand-weight profiles for desk-scale runs."""

from __future__ import annotations

import math

from .netgraph import RoadNetwork


def grid_network(nx=10, ny=10, spacing_m=500.0, origin_lonlat=(114.0, 22.5)):
    """A bidirectional nx x ny street grid with uniform block length.

    Node ids are ``row * nx + col``. Coordinates are laid out in degrees
    around ``origin_lonlat`` so snapping and zone grids behave sensibly.
    """
    lon0, lat0 = origin_lonlat
    deg_per_m_lat = 1.0 / 111_000.0
    deg_per_m_lon = 1.0 / (111_000.0 * math.cos(math.radians(lat0)))
    nodes = []
    for j in range(ny):
        for i in range(nx):
            nodes.append((j * nx + i,
                          lon0 + i * spacing_m * deg_per_m_lon,
                          lat0 + j * spacing_m * deg_per_m_lat))
    edges = []
    for j in range(ny):
        for i in range(nx):
            nid = j * nx + i
            if i + 1 < nx:
                edges.append((nid, nid + 1, spacing_m))
                edges.append((nid + 1, nid, spacing_m))
            if j + 1 < ny:
                edges.append((nid, nid + nx, spacing_m))
                edges.append((nid + nx, nid, spacing_m))
    return RoadNetwork(nodes, edges)


def uniform_weights(network: RoadNetwork):
    n = len(network)
    return {nid: 1.0 / n for nid in network.node_ids}


def hotspot_weights(network: RoadNetwork, hot_nodes, hot_mass,
                    cold_nodes=(), cold_mass=0.0):
    """Concentrate ``hot_mass`` on ``hot_nodes`` and ``cold_mass`` on
    ``cold_nodes``; the remainder spreads uniformly over the other nodes."""
    hot = set(hot_nodes)
    cold = set(cold_nodes)
    if hot & cold:
        raise ValueError("hot and cold node sets overlap")
    rest = [n for n in network.node_ids if n not in hot and n not in cold]
    rest_mass = 1.0 - hot_mass - cold_mass
    if rest_mass < -1e-9 or (not rest and rest_mass > 1e-9):
        raise ValueError("weight masses do not fit the node partition")
    weights = {}
    for n in hot:
        weights[n] = hot_mass / len(hot)
    for n in cold:
        weights[n] = cold_mass / len(cold)
    for n in rest:
        weights[n] = rest_mass / len(rest)
    return weights


def write_network_csvs(network: RoadNetwork, nodes_path, edges_path):
    with open(nodes_path, "w", encoding="utf-8") as fh:
        fh.write("node_id,lon,lat\n")
        for nid in network.node_ids:
            lon, lat = network.coords[nid]
            fh.write(f"{nid},{lon!r},{lat!r}\n")
    with open(edges_path, "w", encoding="utf-8") as fh:
        fh.write("from_id,to_id,length_m\n")
        for u, v, w in network.edges:
            fh.write(f"{u},{v},{w!r}\n")
