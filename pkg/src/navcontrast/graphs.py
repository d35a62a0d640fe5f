"""Navigation graphs: construction, shortest paths, sub-optimal trajectory
enumeration, and hop-ratio partitioning into positive / intra-negative sets.

A NavGraph is immutable after construction; distance caches are filled
lazily and the structure is safe for concurrent readers.  Enumeration is a
pure function of (graph, arguments, seed).
"""

from __future__ import annotations

import heapq
import json
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DisconnectedError

# hop-vs-threshold comparisons use this slack so integer hops compared
# against alpha * h_gt never flip on float noise
BOUNDARY_TOL = 1e-9


@dataclass(frozen=True)
class Trajectory:
    """Ordered viewpoint sequence with hop count and metric length."""

    node_seq: tuple
    length_m: float

    @property
    def hop(self) -> int:
        return len(self.node_seq) - 1

    @property
    def start(self):
        return self.node_seq[0]

    @property
    def goal(self):
        return self.node_seq[-1]

    def is_simple(self) -> bool:
        return len(set(self.node_seq)) == len(self.node_seq)


class NavGraph:
    """Undirected weighted viewpoint graph with 3-D positions and landmarks.

    Node ids must be dense in [0, N); edges carry their Euclidean length.
    The graph must be connected, self-loop free, and adjacent nodes must
    sit at distinct positions.
    """

    def __init__(self, nodes, edges, graph_id="graph"):
        ids = [n[0] for n in nodes]
        n = len(ids)
        if sorted(ids) != list(range(n)):
            raise ValueError("node ids must be unique and dense in [0, N)")
        self.graph_id = graph_id
        self.positions = np.zeros((n, 3), dtype=np.float64)
        self.landmarks = [0] * n
        for node_id, pos, landmark in nodes:
            self.positions[node_id] = np.asarray(pos, dtype=np.float64)
            self.landmarks[node_id] = int(landmark)
        self.landmarks = tuple(self.landmarks)

        adj = [set() for _ in range(n)]
        for a, b in edges:
            if a == b:
                raise ValueError(f"self-loop on node {a}")
            if not (0 <= a < n and 0 <= b < n):
                raise ValueError(f"edge ({a},{b}) references unknown node")
            if self.edge_length(a, b) <= 0.0:
                raise ValueError(f"edge ({a},{b}) has non-positive length")
            adj[a].add(b)
            adj[b].add(a)
        self.adjacency = tuple(tuple(sorted(s)) for s in adj)

        self._hop_cache = {}
        self._geo_cache = {}
        self._sp_cache = {}
        self._check_connected()

    def __len__(self):
        return len(self.adjacency)

    @property
    def num_nodes(self):
        return len(self.adjacency)

    def neighbors(self, v):
        return self.adjacency[v]

    def edge_length(self, a, b) -> float:
        return float(np.linalg.norm(self.positions[a] - self.positions[b]))

    def _check_connected(self):
        if self.num_nodes == 0:
            raise ValueError("empty graph")
        seen = {0}
        q = deque([0])
        while q:
            v = q.popleft()
            for u in self.adjacency[v]:
                if u not in seen:
                    seen.add(u)
                    q.append(u)
        if len(seen) != self.num_nodes:
            raise ValueError("graph is not connected")

    def hop_distances(self, source):
        """BFS hop distances from source (cached)."""
        cached = self._hop_cache.get(source)
        if cached is not None:
            return cached
        dist = np.full(self.num_nodes, -1, dtype=np.int64)
        dist[source] = 0
        q = deque([source])
        while q:
            v = q.popleft()
            for u in self.adjacency[v]:
                if dist[u] < 0:
                    dist[u] = dist[v] + 1
                    q.append(u)
        self._hop_cache[source] = dist
        return dist

    def geodesic_distances(self, source):
        """Metric shortest-path distances from source (cached Dijkstra)."""
        cached = self._geo_cache.get(source)
        if cached is not None:
            return cached
        dist = np.full(self.num_nodes, np.inf)
        dist[source] = 0.0
        heap = [(0.0, source)]
        while heap:
            d, v = heapq.heappop(heap)
            if d > dist[v]:
                continue
            for u in self.adjacency[v]:
                nd = d + self.edge_length(v, u)
                if nd < dist[u]:
                    dist[u] = nd
                    heapq.heappush(heap, (nd, u))
        self._geo_cache[source] = dist
        return dist

    def geodesic(self, a, b) -> float:
        return float(self.geodesic_distances(a)[b])

    def path_length(self, node_seq) -> float:
        return float(sum(self.edge_length(a, b) for a, b in zip(node_seq, node_seq[1:])))

    def trajectory(self, node_seq) -> Trajectory:
        """Validated trajectory on this graph."""
        seq = tuple(int(v) for v in node_seq)
        if not seq:
            raise ValueError("empty node sequence")
        for a, b in zip(seq, seq[1:]):
            if b not in self.adjacency[a]:
                raise ValueError(f"nodes {a} and {b} are not adjacent")
        return Trajectory(seq, self.path_length(seq))

    def to_json_dict(self):
        return {
            "nodes": [
                {"id": i, "pos": [round(float(c), 6) for c in self.positions[i]],
                 "landmark": self.landmarks[i]}
                for i in range(self.num_nodes)
            ],
            "edges": sorted(
                [a, b] for a in range(self.num_nodes)
                for b in self.adjacency[a] if a < b
            ),
        }

    @classmethod
    def from_json_dict(cls, payload, graph_id="graph"):
        nodes = [(n["id"], n["pos"], n["landmark"]) for n in payload["nodes"]]
        return cls(nodes, payload["edges"], graph_id=graph_id)

    @classmethod
    def load(cls, path, graph_id=None):
        with open(path) as fh:
            payload = json.load(fh)
        gid = graph_id if graph_id is not None else str(path)
        return cls.from_json_dict(payload, graph_id=gid)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, sort_keys=True)
            fh.write("\n")


def shortest_path(graph: NavGraph, start, goal) -> Trajectory:
    """Minimum-hop path; ties broken by metric length then lexicographic
    node sequence, so the result is a canonical deterministic path."""
    n = graph.num_nodes
    if not (0 <= start < n and 0 <= goal < n):
        raise ValueError("start/goal not valid node ids")
    cached = graph._sp_cache.get((start, goal))
    if cached is not None:
        return cached
    if start == goal:
        traj = Trajectory((start,), 0.0)
        graph._sp_cache[(start, goal)] = traj
        return traj

    dist = graph.hop_distances(start)
    if dist[goal] < 0:
        raise DisconnectedError(f"no path from {start} to {goal}")

    # layer-by-layer DP; every min-hop path to v enters from layer dist[v]-1
    best = {start: (0.0, (start,))}
    order = sorted((int(dist[v]), v) for v in range(n)
                   if 0 < dist[v] <= dist[goal])
    for layer, v in order:
        choice = None
        for u in graph.adjacency[v]:
            if dist[u] != layer - 1 or u not in best:
                continue
            ulen, upath = best[u]
            cand = (ulen + graph.edge_length(u, v), upath + (v,))
            if choice is None or _path_better(cand, choice):
                choice = cand
        best[v] = choice
    length, path = best[goal]
    traj = Trajectory(path, length)
    graph._sp_cache[(start, goal)] = traj
    return traj


def _path_better(cand, cur) -> bool:
    if cand[0] < cur[0] - BOUNDARY_TOL:
        return True
    if cand[0] > cur[0] + BOUNDARY_TOL:
        return False
    return cand[1] < cur[1]


def enumerate_alternatives(graph: NavGraph, start, goal, hop_cap, max_count,
                           seed) -> list:
    """Simple paths sharing the endpoints with hop <= hop_cap, excluding the
    canonical shortest path.

    Exhaustive when the total count fits in max_count; otherwise a uniform
    reservoir subsample driven by seed.  Output preserves discovery order of
    the deterministic depth-first search, so results are reproducible.
    """
    optimal = shortest_path(graph, start, goal)
    h_gt = optimal.hop
    if hop_cap < h_gt:
        raise ConfigError(f"hop_cap {hop_cap} below shortest-path hop {h_gt}")
    if max_count <= 0:
        return []

    to_goal = graph.hop_distances(goal)
    rng = np.random.default_rng(seed)
    reservoir = []          # (discovery_idx, node_seq)
    count = 0
    opt_seq = optimal.node_seq

    path = [start]
    on_path = {start}

    def visit(v):
        nonlocal count
        if v == goal:
            seq = tuple(path)
            if seq != opt_seq:
                if len(reservoir) < max_count:
                    reservoir.append((count, seq))
                else:
                    j = int(rng.integers(0, count + 1))
                    if j < max_count:
                        reservoir[j] = (count, seq)
                count += 1
            return
        for u in graph.adjacency[v]:
            if u in on_path:
                continue
            if len(path) + to_goal[u] > hop_cap:
                continue
            path.append(u)
            on_path.add(u)
            visit(u)
            path.pop()
            on_path.remove(u)

    visit(start)
    reservoir.sort(key=lambda t: t[0])
    return [graph.trajectory(seq) for _, seq in reservoir]


@dataclass(frozen=True)
class TrajectoryPartition:
    """Hop-ratio split of candidate trajectories around the optimal hop."""

    positives: tuple
    intra_negatives: tuple
    discarded: tuple

    @property
    def all_candidates(self):
        return self.positives + self.intra_negatives + self.discarded


def partition_trajectories(candidates, h_gt, alpha_p, alpha_n) -> TrajectoryPartition:
    """Split candidates: hop <= alpha_p * h_gt -> positive, hop >= alpha_n *
    h_gt -> intra-negative, strictly between -> discarded.

    Requires 2 > alpha_n > alpha_p > 1 and h_gt >= 1 (a zero h_gt would make
    the two bands overlap).
    """
    if not (2.0 > alpha_n > alpha_p > 1.0):
        raise ConfigError(
            f"require 2 > alpha_n > alpha_p > 1, got alpha_p={alpha_p} alpha_n={alpha_n}")
    if h_gt < 1:
        raise ConfigError("h_gt must be >= 1 to separate trajectory bands")
    pos, neg, mid = [], [], []
    p_cut = alpha_p * h_gt
    n_cut = alpha_n * h_gt
    for traj in candidates:
        if traj.hop <= p_cut + BOUNDARY_TOL:
            pos.append(traj)
        elif traj.hop >= n_cut - BOUNDARY_TOL:
            neg.append(traj)
        else:
            mid.append(traj)
    return TrajectoryPartition(tuple(pos), tuple(neg), tuple(mid))


def default_hop_cap(h_gt, alpha_n) -> int:
    """Enumeration cap that leaves room to actually sample intra-negatives."""
    return int(math.ceil(alpha_n * h_gt)) + 2
