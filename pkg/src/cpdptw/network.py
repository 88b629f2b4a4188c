"""Dual aerial/ground travel networks.

Drones and sidewalk robots see different graphs over the same node set: the
ground network follows the (desk-scale, Euclidean) street fabric and is never
blocked, while the aerial network can lose direct customer-to-customer edges
to obstacles with probability ``rho`` — blocked pairs must then route through
other nodes.  Depot-anchored edges are never blocked, so every node stays
reachable at any density.

Shortest paths minimize *distance*; travel time is derived afterwards from
the stored path as sum(length / min(vehicle speed, edge cap)).
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import yaml

FORMAT_VERSION = 1


@dataclass
class AdjacencySpec:
    """Spatio-temporal neighborhood thresholds and aerial obstacle density."""

    zeta: float = 120.0   # min: |l_i - l_j| <= zeta makes nodes temporal neighbors
    mu: float = 10.0      # km: distance <= mu makes nodes spatial neighbors
    rho: float = 0.0      # probability a direct aerial customer-pair edge is blocked
    seed: int = 0

    def validate(self):
        if not self.zeta > 0:
            raise ValueError(f"zeta: must be > 0, got {self.zeta!r}")
        if not self.mu > 0:
            raise ValueError(f"mu: must be > 0, got {self.mu!r}")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho: must be in [0, 1], got {self.rho!r}")
        return self


@dataclass
class EdgeFeature:
    i: int
    j: int
    value: float   # min
    mode: str


class ModeGraph:
    """Weighted directed graph for one travel mode.

    ``nodes`` maps node index -> (x_km, y_km); ``kinds`` maps node index ->
    customer-pickup | customer-delivery | depot | intermediary.  Edges are
    (i, j, length_m, speed_cap_mps, allowed).  Immutable once built; one
    shortest-path tree per source is cached on first use.
    """

    def __init__(self, mode, nodes, kinds, edges):
        self.mode = mode
        self.nodes = dict(nodes)
        self.kinds = dict(kinds)
        self.edges = [tuple(e) for e in edges]
        self._adj = {i: [] for i in self.nodes}
        for (i, j, length, cap, allowed) in self.edges:
            if length <= 0:
                raise ValueError(f"edge ({i}, {j}): length must be > 0, got {length}")
            if allowed:
                self._adj[i].append((j, float(length), float(cap)))
        for i in self._adj:
            self._adj[i].sort()          # deterministic relaxation order
        self._sssp_cache = {}

    def is_customer(self, i):
        return self.kinds[i] in ("customer-pickup", "customer-delivery")

    # -- shortest paths -----------------------------------------------------

    def _sssp(self, src):
        """Dijkstra tree from ``src``: (dist_m dict, parent dict)."""
        hit = self._sssp_cache.get(src)
        if hit is not None:
            return hit
        dist = {src: 0.0}
        parent = {src: None}
        heap = [(0.0, src)]           # (distance, node): index breaks ties
        done = set()
        while heap:
            d, u = heapq.heappop(heap)
            if u in done:
                continue
            done.add(u)
            for (v, length, _cap) in self._adj.get(u, ()):
                nd = d + length
                if nd < dist.get(v, math.inf):
                    dist[v] = nd
                    parent[v] = u
                    heapq.heappush(heap, (nd, v))
        self._sssp_cache[src] = (dist, parent)
        return dist, parent

    def path_to(self, src, dst):
        """Node list src..dst along the shortest-path tree, or None."""
        if src == dst:
            return [src]
        dist, parent = self._sssp(src)
        if dst not in dist:
            return None
        path = [dst]
        while path[-1] != src:
            path.append(parent[path[-1]])
        path.reverse()
        return path

    def distance_m(self, src, dst):
        if src == dst:
            return 0.0
        dist, _ = self._sssp(src)
        return dist.get(dst, math.inf)

    def edge_attr(self, i, j):
        for (v, length, cap) in self._adj.get(i, ()):
            if v == j:
                return length, cap
        raise KeyError(f"no allowed edge ({i}, {j}) in {self.mode} graph")

    def travel_min(self, src, dst, speed_mps):
        """Minutes along the cached shortest path at ``speed_mps`` (edge caps apply)."""
        path = self.path_to(src, dst)
        if path is None:
            return math.inf
        total_s = 0.0
        for a, b in zip(path, path[1:]):
            length, cap = self.edge_attr(a, b)
            total_s += length / min(speed_mps, cap)
        return total_s / 60.0


def shortest_path(g, i, j):
    """Minimal-distance path in ``g``; (None, inf) when unreachable."""
    if i not in g.nodes or j not in g.nodes:
        raise KeyError(f"node {i if i not in g.nodes else j} not in graph")
    path = g.path_to(i, j)
    if path is None:
        return None, math.inf
    return path, g.distance_m(i, j)


def apply_density(g, spec):
    """Remove direct aerial customer-pair edges with probability ``spec.rho``.

    Blocking is symmetric, independent per unordered pair and reproducible
    for a fixed seed.  Ground graphs and depot-anchored edges are untouched.
    """
    spec.validate()
    if g.mode != "UAV" or spec.rho == 0.0:
        return g
    rng = np.random.default_rng(spec.seed)
    customers = sorted(i for i in g.nodes if g.is_customer(i))
    blocked = set()
    for i, j in itertools.combinations(customers, 2):
        if rng.random() < spec.rho:
            blocked.add((i, j))
            blocked.add((j, i))
    edges = [e for e in g.edges if (e[0], e[1]) not in blocked]
    return ModeGraph(g.mode, g.nodes, g.kinds, edges)


def temporal_adjacency(inst, spec):
    """Symmetric boolean matrix: |l_i - l_j| <= zeta over all nodes.

    Depots have unbounded windows and are never temporal neighbors of
    anything (the action mask admits them unconditionally instead).
    """
    n = inst.n_nodes
    late = np.array([inst.node_window(k)[1] for k in range(n)])
    finite = np.flatnonzero(np.isfinite(late))
    a = np.zeros((n, n), dtype=bool)
    lf = late[finite]
    a[np.ix_(finite, finite)] = np.abs(lf[:, None] - lf[None, :]) <= spec.zeta
    np.fill_diagonal(a, False)
    return a


def spatial_adjacency(inst, spec):
    """Symmetric boolean matrix: Euclidean distance <= mu, all nodes."""
    xy = inst.coords()
    d = np.linalg.norm(xy[:, None, :] - xy[None, :, :], axis=-1)
    a = d <= spec.mu
    np.fill_diagonal(a, False)
    return a


# Default cruise speeds (m/s) used for edge features when no explicit speed
# is supplied; instances with bespoke fleets can pass their own.
_MODE_SPEED = {"UAV": 20.0, "ADR": 8.3}


def edge_features(inst, g, mode, spec=None, speed_mps=None):
    """Relative-slack features e_ij = |e_i - l_j - t_ij| (minutes).

    Computed for ordered customer-node pairs in the temporal neighborhood
    (all customer pairs when ``spec`` is None); pairs without a path in
    ``g`` are omitted.
    """
    v = _MODE_SPEED[mode] if speed_mps is None else speed_mps
    if not v > 0:
        raise ValueError(f"speed for mode {mode}: must be > 0, got {v!r}")
    nc = 2 * inst.n_customers
    adj = temporal_adjacency(inst, spec) if spec is not None else None
    feats = []
    for i in range(nc):
        e_i = inst.node_window(i)[0]
        for j in range(nc):
            if i == j:
                continue
            if adj is not None and not adj[i, j]:
                continue
            d = g.distance_m(i, j)
            if math.isinf(d):
                continue
            l_j = inst.node_window(j)[1]
            feats.append(EdgeFeature(i, j, abs(e_i - l_j - d / (v * 60.0)), mode))
    return feats


# -- construction from instances ---------------------------------------------


_KIND = {"pickup": "customer-pickup", "delivery": "customer-delivery",
         "depot": "depot"}


def _complete_graph(inst, mode):
    nodes = {k: inst.node_xy(k) for k in range(inst.n_nodes)}
    kinds = {k: _KIND[inst.node_kind(k)] for k in range(inst.n_nodes)}
    edges = []
    for i in nodes:
        for j in nodes:
            if i == j:
                continue
            d = inst.euclidean_km(i, j) * 1000.0
            if d <= 0.0:               # coincident nodes still need an edge
                d = 1e-9
            edges.append((i, j, d, math.inf, True))
    return ModeGraph(mode, nodes, kinds, edges)


@dataclass
class DualNetwork:
    """Aerial + ground graphs plus the adjacency structure built from one spec."""

    aerial: ModeGraph
    ground: ModeGraph
    spec: AdjacencySpec
    temporal: np.ndarray = field(repr=False)
    spatial: np.ndarray = field(repr=False)

    def graph(self, mode):
        if mode == "UAV":
            return self.aerial
        if mode == "ADR":
            return self.ground
        raise ValueError(f"unknown mode {mode!r}")

    def distance_km(self, mode, i, j):
        return self.graph(mode).distance_m(i, j) / 1000.0

    def travel_min(self, mode, i, j, speed_mps):
        return self.graph(mode).travel_min(i, j, speed_mps)


def build_networks(inst, spec=None):
    """Complete Euclidean graphs for both modes, with aerial density applied."""
    spec = (spec or AdjacencySpec()).validate()
    aerial = apply_density(_complete_graph(inst, "UAV"), spec)
    ground = _complete_graph(inst, "ADR")
    return DualNetwork(aerial=aerial, ground=ground, spec=spec,
                       temporal=temporal_adjacency(inst, spec),
                       spatial=spatial_adjacency(inst, spec))


# -- graph files ----------------------------------------------------------------


def save_graph(g, path):
    doc = {
        "format_version": FORMAT_VERSION,
        "mode": g.mode,
        "nodes": [{"id": i, "x_km": g.nodes[i][0], "y_km": g.nodes[i][1],
                   "kind": g.kinds[i]} for i in sorted(g.nodes)],
        "edges": [{"i": i, "j": j, "length_m": length, "speed_cap": cap,
                   "allowed": allowed} for (i, j, length, cap, allowed) in g.edges],
    }
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)


def load_graph(path):
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise ValueError("graph file: top level must be a mapping")
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(
            f"format_version: expected {FORMAT_VERSION}, got {doc.get('format_version')!r}")
    try:
        nodes = {n["id"]: (n["x_km"], n["y_km"]) for n in doc["nodes"]}
        kinds = {n["id"]: n["kind"] for n in doc["nodes"]}
        edges = [(e["i"], e["j"], e["length_m"], e["speed_cap"], e["allowed"])
                 for e in doc["edges"]]
    except KeyError as exc:
        raise ValueError(f"graph file: missing field {exc}") from None
    return ModeGraph(doc.get("mode", "ADR"), nodes, kinds, edges)
