"""Slow, obviously-correct reference implementations used only by the tests.

None of these import from percolab; they work on plain Python sets, dicts
and lists so that a shared bug cannot hide in both sides of a comparison.
"""
from __future__ import annotations

import heapq
import itertools
from collections import deque


def l1_neighbours(v):
    for a in range(len(v)):
        for s in (1, -1):
            w = list(v)
            w[a] += s
            yield tuple(w)


def king_neighbours(v):
    for off in itertools.product((-1, 0, 1), repeat=len(v)):
        if any(off):
            yield tuple(x + o for x, o in zip(v, off))


def flood(start, allowed, nbrs=l1_neighbours):
    seen = {start}
    todo = deque([start])
    while todo:
        u = todo.popleft()
        for w in nbrs(u):
            if w in allowed and w not in seen:
                seen.add(w)
                todo.append(w)
    return seen


def components(S, nbrs=l1_neighbours):
    left = set(S)
    out = []
    while left:
        s = min(left)
        c = flood(s, left, nbrs)
        out.append(c)
        left -= c
    return sorted(out, key=min)


def outside(C):
    """Complement cells of the bounding box (plus one layer) reachable from its corner."""
    d = len(next(iter(C)))
    lo = [min(c[a] for c in C) - 1 for a in range(d)]
    hi = [max(c[a] for c in C) + 1 for a in range(d)]
    box = set(itertools.product(*[range(l, h + 1) for l, h in zip(lo, hi)]))
    return flood(tuple(lo), box - set(C)), box


def ext_boundary(C):
    out, _ = outside(C)
    return {w for c in C for w in l1_neighbours(c) if w in out}


def interior_of(C):
    out, box = outside(C)
    return box - set(C) - out


# -- bond grids as dicts: vertex -> set of open neighbours ---------------------

def grid_graph(shape, lo, is_open):
    """Adjacency of the open edges; is_open(u, v) is called with u < v lexicographically."""
    verts = [tuple(l + i for l, i in zip(lo, idx)) for idx in itertools.product(*[range(s) for s in shape])]
    vs = set(verts)
    adj = {v: [] for v in verts}
    for v in verts:
        for a in range(len(v)):
            w = list(v)
            w[a] += 1
            w = tuple(w)
            if w in vs and is_open(v, w):
                adj[v].append(w)
                adj[w].append(v)
    return adj


def bfs_dist(adj, s):
    dist = {s: 0}
    todo = deque([s])
    while todo:
        u = todo.popleft()
        for w in adj[u]:
            if w not in dist:
                dist[w] = dist[u] + 1
                todo.append(w)
    return dist


def fifo_bfs_path(adj_ordered, s, t):
    """FIFO BFS where adj_ordered(u) yields neighbours in a fixed order; first discoverer is parent."""
    parent = {s: None}
    todo = deque([s])
    while todo:
        u = todo.popleft()
        if u == t:
            break
        for w in adj_ordered(u):
            if w not in parent:
                parent[w] = u
                todo.append(w)
    if t not in parent:
        return None
    chain = [t]
    while chain[-1] != s:
        chain.append(parent[chain[-1]])
    return chain[::-1]


def dijkstra(weights, s):
    """weights: dict vertex -> list of (neighbour, w)."""
    dist = {s: 0.0}
    heap = [(0.0, s)]
    done = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for w, c in weights[u]:
            nd = d + c
            if nd < dist.get(w, float("inf")):
                dist[w] = nd
                heapq.heappush(heap, (nd, w))
    return dist


def all_simple_path_min(adj, s, t, cap=40):
    """Shortest s-t path length by exhaustive DFS over simple paths (tiny graphs only)."""
    best = [None]

    def go(u, seen, length):
        if best[0] is not None and length >= best[0]:
            return
        if u == t:
            best[0] = length
            return
        if length >= cap:
            return
        for w in adj[u]:
            if w not in seen:
                seen.add(w)
                go(w, seen, length + 1)
                seen.remove(w)

    go(s, {s}, 0)
    return best[0]


def union_find_labels(adj):
    parent = {v: v for v in adj}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for u, ws in adj.items():
        for w in ws:
            ru, rw = find(u), find(w)
            if ru != rw:
                parent[max(ru, rw)] = min(ru, rw)
    groups = {}
    for v in adj:
        groups.setdefault(find(v), set()).add(v)
    return sorted(groups.values(), key=min)


# -- scale-1 good boxes, straight from the four conditions ---------------------

def box_range(N, centre_site, width):
    """Integer points of centre_site*N + [-width/2, width/2[ along one axis."""
    from fractions import Fraction
    c = centre_site * N
    return [c + x for x in range(-width, width + 1) if -Fraction(width, 2) <= x < Fraction(width, 2)]


def box_points(N, site, width):
    return list(itertools.product(*[box_range(N, s, width) for s in site]))


def restricted_graph(points, is_open):
    pts = set(points)
    adj = {v: [] for v in pts}
    for v in pts:
        for a in range(len(v)):
            w = list(v)
            w[a] += 1
            w = tuple(w)
            if w in pts and is_open(v, w):
                adj[v].append(w)
                adj[w].append(v)
    return adj


def linf_diameter(C):
    return max(max(c[a] for c in C) - min(c[a] for c in C) for a in range(len(next(iter(C)))))


def scale1_oracle(is_open_p, is_open_q, site, N, beta):
    """Returns (good, (i), (ii), (iii), (iv)); later entries are None once an earlier one fails."""
    big = box_points(N, site, 3 * N)
    P = restricted_graph(big, is_open_p)
    comps = union_find_labels(P)
    large = [c for c in comps if linf_diameter(c) >= N]
    if len(large) != 1:
        return False, False, None, None, None
    C = large[0]
    crossing = True
    for off in itertools.product((-1, 0, 1), repeat=len(site)):
        sub = box_points(N, tuple(s + o for s, o in zip(site, off)), N)
        lo = [min(p[a] for p in sub) for a in range(len(site))]
        hi = [max(p[a] for p in sub) for a in range(len(site))]
        ok = False
        for c in union_find_labels(restricted_graph(sub, is_open_p)):
            if len(c) < 2:
                continue
            faces = all(any(p[a] == lo[a] for p in c) and any(p[a] == hi[a] for p in c) for a in range(len(site)))
            if faces and c <= C:
                ok = True
        crossing = crossing and ok
    if not crossing:
        return False, True, False, None, None
    short = True
    for v in C:
        dist = bfs_dist(P, v)
        if max(dist[w] for w in C) > 12 * beta * N:
            short = False
            break
    Q = restricted_graph(big, is_open_q)
    hits = True
    for c in union_find_labels(Q):
        if c & C:
            continue
        n_edges = sum(len(Q[v]) for v in c) // 2
        if n_edges >= N:
            hits = False
    return short and hits, True, True, short, hits


def bad_clusters_from_map(good):
    """good: dict site -> bool. Returns dict site -> L1 bad cluster (frozenset)."""
    bad = {s for s, g in good.items() if not g}
    out = {}
    for c in components(bad, l1_neighbours):
        fc = frozenset(c)
        for s in c:
            out[s] = fc
    return out


def count_star_animals(m):
    """*-connected m-subsets of Z^2 containing the origin, by checking every
    subset of the (2m-1)^2 box around it."""
    if m < 1:
        return 0
    r = m - 1
    cells = [(x, y) for x in range(-r, r + 1) for y in range(-r, r + 1) if (x, y) != (0, 0)]
    count = 0
    for rest in itertools.combinations(cells, m - 1):
        S = {(0, 0), *rest}
        if len(flood((0, 0), S, king_neighbours)) == m:
            count += 1
    return count
