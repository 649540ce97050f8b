"""Chemical distance, geodesics, regularised endpoints and passage times."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from .percolation import (BondGrid, ClusterLabeling, EdgeGrid, Window, sample_uniform_field,
                          trial_seed)


@dataclass(frozen=True)
class GeodesicResult:
    distance: int | None  # None means unreachable
    path: np.ndarray | None
    expanded_vertices: int

    @property
    def reachable(self) -> bool:
        return self.distance is not None


@dataclass(frozen=True)
class PassageResult:
    time: float  # +inf when unreachable
    path: np.ndarray | None


def _moves(grid: BondGrid):
    """Flat neighbour offsets and permission masks in the order +x1, -x1, +x2, -x2, ..."""
    d, shape = grid.d, grid.shape
    strides = [int(np.prod(shape[a + 1:])) for a in range(d)]
    moves = []
    for a in range(d):
        edge = np.asarray(grid.data[a], dtype=bool)
        pad_hi = [(0, 0)] * d
        pad_hi[a] = (0, 1)
        pad_lo = [(0, 0)] * d
        pad_lo[a] = (1, 0)
        moves.append((strides[a], np.pad(edge, pad_hi).ravel()))
        moves.append((-strides[a], np.pad(edge, pad_lo).ravel()))
    return moves


def bfs(grid: BondGrid, source: int, target: int | None = None, blocked=None):
    """Breadth-first search from flat vertex `source` over open edges.

    Emulates a FIFO queue where each dequeued vertex enqueues its neighbours in
    the fixed direction order and the first discoverer becomes the parent.
    Returns (dist, parent) flat arrays; dist is -1 for unreached vertices. Stops
    after the level that reaches `target`.
    """
    n = grid.n_vertices
    moves = _moves(grid)
    dist = np.full(n, -1, dtype=np.int64)
    parent = np.full(n, -1, dtype=np.int64)
    seen = np.zeros(n, dtype=bool) if blocked is None else np.asarray(blocked, dtype=bool).copy()
    seen[source] = True
    dist[source] = 0
    frontier = np.array([source], dtype=np.int64)
    level = 0
    while len(frontier) and (target is None or dist[target] < 0):
        level += 1
        cand = np.full((len(frontier), len(moves)), -1, dtype=np.int64)
        for k, (off, ok) in enumerate(moves):
            allowed = ok[frontier]
            cand[allowed, k] = frontier[allowed] + off
        src = np.broadcast_to(frontier[:, None], cand.shape).ravel()
        cand = cand.ravel()
        keep = cand >= 0
        keep[keep] = ~seen[cand[keep]]
        cand, src = cand[keep], src[keep]
        if len(cand) == 0:
            break
        _, first = np.unique(cand, return_index=True)
        first.sort()
        frontier = cand[first]
        parent[frontier] = src[first]
        dist[frontier] = level
        seen[frontier] = True
    return dist, parent


def _trace_back(grid: BondGrid, parent: np.ndarray, source: int, target: int) -> np.ndarray:
    chain = [target]
    while chain[-1] != source:
        chain.append(int(parent[chain[-1]]))
    return grid.coords(np.asarray(chain[::-1]))


def chemical_distance(grid: BondGrid, x, y, lo=None, hi=None, blocked_points=None) -> GeodesicResult:
    """Unit-weight geodesic from x to y using open edges inside [lo, hi] (default: whole grid)."""
    if lo is not None:
        grid = grid.restrict(lo, hi)
    if not (grid.contains(x) and grid.contains(y)):
        raise ValueError(f"endpoints {tuple(x)} / {tuple(y)} outside the search region")
    s, t = int(grid.index(x)), int(grid.index(y))
    blocked = None
    if blocked_points is not None and len(blocked_points):
        pts = np.asarray(blocked_points, dtype=np.int64).reshape(-1, grid.d)
        pts = pts[grid.contains(pts)]
        blocked = np.zeros(grid.n_vertices, dtype=bool)
        blocked[grid.index(pts)] = True
        if blocked[s] or blocked[t]:
            return GeodesicResult(None, None, 0)
    dist, parent = bfs(grid, s, t, blocked)
    expanded = int(np.count_nonzero(dist >= 0))
    if dist[t] < 0:
        return GeodesicResult(None, None, expanded)
    return GeodesicResult(int(dist[t]), _trace_back(grid, parent, s, t), expanded)


def distances_from(grid: BondGrid, x) -> np.ndarray:
    """All BFS distances from x, reshaped to the grid (-1 where unreachable)."""
    dist, _ = bfs(grid, int(grid.index(x)))
    return dist.reshape(grid.shape)


def regularize(x, lab: ClusterLabeling, cid: int) -> tuple[int, ...]:
    """Cluster vertex closest to x in L1; ties go to the lexicographically smallest."""
    pts = lab.members(cid)
    if len(pts) == 0:
        raise ValueError("empty cluster")
    d1 = np.abs(pts - np.asarray(x)).sum(axis=1)
    # members come in flat (lexicographic) order, so argmin takes the smallest tie
    return tuple(int(c) for c in pts[int(np.argmin(d1))])


def passage_time(times: EdgeGrid, x, y, lo=None, hi=None) -> PassageResult:
    if lo is not None:
        times = times.restrict(lo, hi)
    if not (times.contains(x) and times.contains(y)):
        raise ValueError("endpoints outside the search region")
    if any(np.any(a < 0) for a in times.data):
        raise ValueError("negative passage time")
    u, v = times.edge_lists(np.isfinite)
    w = np.concatenate([a[np.isfinite(a)] for a in times.data]).astype(float)
    n = times.n_vertices
    # csr_matrix keeps explicit zeros, so zero-time edges stay in the graph
    graph = sp.csr_matrix((w, (u, v)), shape=(n, n))
    s, t = int(times.index(x)), int(times.index(y))
    dist, pred = dijkstra(graph, directed=False, indices=s, return_predecessors=True)
    if not np.isfinite(dist[t]):
        return PassageResult(float("inf"), None)
    chain = [t]
    while chain[-1] != s:
        chain.append(int(pred[chain[-1]]))
    path = times.coords(np.asarray(chain[::-1]))
    return PassageResult(float(times.path_values(path).sum()), path)


def binomial_half_width(freq: float, trials: int, z: float = 1.96) -> float:
    return z * float(np.sqrt(max(freq * (1 - freq), 0.0) / trials)) if trials else float("nan")


def ap_tail_estimate(p: float, window: Window, trials: int, x, beta_grid, seed: int) -> list[dict]:
    """Monte Carlo frequency of beta*|x|_1 <= D(0, x) < inf for each beta."""
    x = tuple(int(c) for c in x)
    norm = sum(abs(c) for c in x)
    origin = (0,) * window.d
    dists = []
    for t in range(trials):
        grid = window.grid(tuple(a <= p for a in sample_uniform_field(window, trial_seed(seed, t)).per_axis))
        dists.append(chemical_distance(grid, origin, x).distance)
    rows = []
    for beta in beta_grid:
        hits = sum(1 for D in dists if D is not None and beta * norm <= D)
        freq = hits / trials
        rows.append({"beta": float(beta), "frequency": freq, "hits": hits, "trials": trials,
                     "half_width": binomial_half_width(freq, trials)})
    return rows


def calibrate_beta(table: list[dict], threshold: float) -> float:
    """Smallest beta >= 1 in the table whose tail frequency is below `threshold`."""
    for row in sorted(table, key=lambda r: r["beta"]):
        if row["beta"] >= 1 and row["frequency"] < threshold:
            return row["beta"]
    raise ValueError("no beta in the grid meets the tail threshold")
