"""Multiscale good/bad boxes.

Sites at scale k index the lattice boxes B_{N_k}(i). Verdicts are stored per
scale in dense int8 maps over every site whose box meets the window, and are
filled lazily by rectangular regions. A site whose dependency region does not
fit in the window is UNEVALUATED, and consumers treat it as bad.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse as sp
from scipy import ndimage
from scipy.sparse.csgraph import shortest_path

from .chemdist import bfs
from .lattice import box_bounds, half_open_range
from .percolation import BondGrid, MaskedView, cluster_labeling, crossing_clusters

GOOD, BAD, UNEVALUATED = 1, 0, -1
_PENDING = -2
VERDICT_NAMES = {GOOD: "good", BAD: "bad", UNEVALUATED: "unevaluated"}


class BoundaryError(RuntimeError):
    """A construction needed verdicts that the window cannot certify."""


# -- hierarchy ---------------------------------------------------------------

@dataclass(frozen=True)
class ScaleHierarchy:
    l: tuple[int, ...]
    beta: float
    d: int
    checks: dict = field(default_factory=dict, compare=False)

    @property
    def N(self) -> tuple[int, ...]:
        return tuple(itertools.accumulate(self.l, lambda a, b: a * b))

    @property
    def depth(self) -> int:
        return len(self.l)

    @property
    def R(self) -> int:
        """Smallest integer strictly larger than 52*beta."""
        return math.floor(52 * self.beta) + 1

    @property
    def N1(self) -> int:
        return self.l[0]

    def link_bound(self) -> float:
        return 12 * self.beta * self.N1

    def shell_distance(self) -> float:
        return (14 * self.beta + 2 * self.d) * self.N1

    def delta(self, k: int) -> Fraction:
        """delta_k = 1 / (N_{k+1}^2 N_k^{3d+1})."""
        N = self.N
        return Fraction(1, N[k] ** 2 * N[k - 1] ** (3 * self.d + 1))


def _l1_checks(l1: int, beta: float, d: int, decay_rate: float | None) -> dict:
    R = math.floor(52 * beta) + 1
    checks = {
        "l1_ge_2R_pow_d": l1 >= (2 * R) ** d,
        # log 2 + d log(3l) <= d log(7) l for all l >= l1; the right side grows
        # faster for l >= 1, so checking l = l1 suffices
        "log_growth": math.log(2) + d * math.log(3 * l1) <= d * math.log(7) * l1,
        "l1_ge_2_(3d)^2": l1 >= 2 * (3 * d) ** 2,
        "decay_vs_animals": None if decay_rate is None
        else d * math.log(7) <= decay_rate * l1 / (4 * R ** d),
    }
    return checks


def build_hierarchy(l1: int, schedule="paper_default", beta: float = 1.0, d: int = 2,
                    depth: int = 3, decay_rate: float | None = None,
                    allow_decreasing: bool = False) -> ScaleHierarchy:
    """Scale sequence with N_{k+1} = N_k^{2d} (default) or an explicit list of l_k.

    Explicit schedules must be non-decreasing unless `allow_decreasing` is set
    (small fixtures that need a deep hierarchy inside a modest window).
    """
    if beta < 1:
        raise ValueError("beta must be >= 1")
    if schedule == "paper_default":
        if l1 < 3:
            raise ValueError("l1 must be >= 3")
        N = [l1]
        while len(N) < depth:
            N.append(N[-1] ** (2 * d))
        l = [N[0]] + [b // a for a, b in zip(N, N[1:])]
    else:
        l = [int(x) for x in schedule]
        if l[0] != l1:
            raise ValueError(f"explicit schedule starts at {l[0]}, expected l1={l1}")
        if l1 < 3:
            raise ValueError("l1 must be >= 3")
        if any(x < 2 for x in l[1:]):
            raise ValueError(f"schedule {l} has a ratio below 2")
        if not allow_decreasing and any(b < a for a, b in zip(l, l[1:])):
            raise ValueError(f"schedule {l} is decreasing")
    return ScaleHierarchy(tuple(l), float(beta), d, _l1_checks(l1, beta, d, decay_rate))


# -- scale 1 ------------------------------------------------------------------

@dataclass(frozen=True)
class Scale1Verdict:
    good: bool
    unique_large_cluster: bool
    crossing: bool | None = None
    short_paths: bool | None = None
    long_q_paths_hit: bool | None = None
    cluster: np.ndarray | None = field(default=None, repr=False, compare=False)


def _cluster_extent(coords: np.ndarray, labels: np.ndarray, n: int) -> np.ndarray:
    """L-infinity diameter of every cluster."""
    diam = np.zeros(n, dtype=np.int64)
    for a in range(coords.shape[1]):
        mx = np.full(n, np.iinfo(np.int64).min)
        mn = np.full(n, np.iinfo(np.int64).max)
        np.maximum.at(mx, labels, coords[:, a])
        np.minimum.at(mn, labels, coords[:, a])
        diam = np.maximum(diam, mx - mn)
    return diam


def _graph_diameter_at_most(P: BondGrid, members: np.ndarray, bound: float) -> bool:
    """Whether all pairwise distances inside the cluster `members` are <= bound."""
    d0, _ = bfs(P, int(members[0]))
    r = int(d0[members].max())
    if 2 * r <= bound:
        return True
    if r > bound:
        return False
    far = int(members[np.argmax(d0[members])])
    d1, _ = bfs(P, far)
    if int(d1[members].max()) > bound:
        return False
    u, v = P.edge_lists()
    n = P.n_vertices
    adj = sp.csr_matrix((np.ones(len(u)), (u, v)), shape=(n, n))
    for start in range(0, len(members), 256):
        dist = shortest_path(adj, directed=False, unweighted=True, indices=members[start:start + 256])
        if dist[:, members].max() > bound:
            return False
    return True


def scale1_verdict(p_grid: BondGrid, q_grid: BondGrid, site, h: ScaleHierarchy) -> Scale1Verdict:
    """Full evaluation of the four scale-1 conditions on B'_{N1}(site)."""
    N1 = h.N1
    lo, hi = box_bounds(N1, site, enlarged=True)
    if not (p_grid.contains(lo) and p_grid.contains(hi)):
        raise ValueError(f"enlarged box of site {tuple(site)} leaves the window")
    P = p_grid.restrict(lo, hi)
    Q = q_grid.restrict(lo, hi)
    lab = cluster_labeling(P)
    coords = P.coords(np.arange(P.n_vertices))
    diam = _cluster_extent(coords, lab.labels, lab.n_clusters)
    large = np.flatnonzero(diam >= N1)
    if len(large) != 1:
        return Scale1Verdict(False, False)
    cid = int(large[0])
    in_c = lab.labels == cid
    members = np.flatnonzero(in_c)

    crossing = True
    site = np.asarray(site)
    for off in itertools.product((-1, 0, 1), repeat=h.d):
        blo, bhi = box_bounds(N1, site + np.asarray(off))
        sub_lab, ids = crossing_clusters(P, blo, bhi)
        hit = False
        for sid in ids:
            first = sub_lab.members(sid)[0]
            if in_c[P.index(first)]:
                hit = True
                break
        if not hit:
            crossing = False
            break

    short = _graph_diameter_at_most(P, members, 12 * h.beta * N1) if crossing else None

    qlab = cluster_labeling(Q)
    touched = np.unique(qlab.labels[members])
    u, _ = Q.edge_lists()
    edge_count = np.bincount(qlab.labels[u], minlength=qlab.n_clusters)
    edge_count[touched] = 0
    hits = bool(edge_count.max(initial=0) < N1)

    good = bool(crossing and short and hits)
    return Scale1Verdict(good, True, crossing, short, hits, coords[members])


def crossing_cluster_mask(p_grid: BondGrid, site, h: ScaleHierarchy) -> tuple[BondGrid, np.ndarray]:
    """The unique large p-cluster of B'_{N1}(site) as a flat mask over the enlarged box."""
    lo, hi = box_bounds(h.N1, site, enlarged=True)
    P = p_grid.restrict(lo, hi)
    lab = cluster_labeling(P)
    coords = P.coords(np.arange(P.n_vertices))
    diam = _cluster_extent(coords, lab.labels, lab.n_clusters)
    large = np.flatnonzero(diam >= h.N1)
    if len(large) != 1:
        raise ValueError(f"site {tuple(site)} has no unique crossing cluster")
    return P, lab.labels == int(large[0])


def _padded_cumsum(arr: np.ndarray) -> np.ndarray:
    out = np.zeros(tuple(s + 1 for s in arr.shape), dtype=np.int64)
    core = arr.astype(np.int64)
    for a in range(arr.ndim):
        core = np.cumsum(core, axis=a)
    out[(slice(1, None),) * arr.ndim] = core
    return out


def _box_sums(S: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Sums of the original array over inclusive index boxes [lo, hi] (rows)."""
    d = lo.shape[1]
    total = np.zeros(len(lo), dtype=np.int64)
    for corner in itertools.product((0, 1), repeat=d):
        idx = tuple(np.where(c, hi[:, a] + 1, lo[:, a]) for a, c in enumerate(corner))
        sign = (-1) ** (d - sum(corner))
        total += sign * S[idx]
    return total


# -- cache --------------------------------------------------------------------

def _site_range(lo: int, hi: int, N: int) -> tuple[int, int]:
    return (lo + N // 2) // N, (hi + N // 2) // N


@dataclass
class _ScaleMap:
    origin: np.ndarray  # site coords of states[0, ..., 0]
    states: np.ndarray
    eval_lo: np.ndarray  # evaluable site box (inclusive); lo > hi when empty
    eval_hi: np.ndarray


class BoxStateCache:
    """Memoised verdicts for a masked configuration view.

    `view` may be None for verdict-only fixtures; uninjected scale-1 sites are
    then unevaluated.
    """

    def __init__(self, view: MaskedView | None, h: ScaleHierarchy, window_lo=None, window_hi=None):
        self.view = view
        self.h = h
        if view is not None:
            window_lo, window_hi = view.p.lo, view.p.hi
        self.lo = np.asarray(window_lo, dtype=np.int64)
        self.hi = np.asarray(window_hi, dtype=np.int64)
        self.details: dict[tuple, Scale1Verdict] = {}
        self.full_checks = 0
        self._closed_sums = None
        self._maps: list[_ScaleMap] = []
        eval_lo = eval_hi = None
        for k in range(1, h.depth + 1):
            N = h.N[k - 1]
            if N > 4 * int(np.abs(np.concatenate([self.lo, self.hi])).max()) + 4:
                s_lo = np.zeros(h.d, dtype=np.int64)
                s_hi = np.zeros(h.d, dtype=np.int64)
            else:
                rng = [_site_range(int(a), int(b), N) for a, b in zip(self.lo, self.hi)]
                s_lo = np.array([r[0] for r in rng])
                s_hi = np.array([r[1] for r in rng])
            if k == 1:
                lo3, hi3 = half_open_range(3 * N)
                e_lo = -((-(self.lo - lo3)) // N)  # ceil
                e_hi = (self.hi - hi3) // N
            else:
                lk = h.l[k - 1]
                lo3, hi3 = half_open_range(3 * lk)
                e_lo = -((-(eval_lo - (lo3 - lk))) // lk)
                e_hi = (eval_hi - (hi3 + lk)) // lk
            e_lo = np.maximum(e_lo, s_lo)
            e_hi = np.minimum(e_hi, s_hi)
            states = np.full(tuple(s_hi - s_lo + 1), _PENDING, dtype=np.int8)
            self._maps.append(_ScaleMap(s_lo, states, e_lo, e_hi))
            eval_lo, eval_hi = e_lo, e_hi

    # region helpers
    def site_bounds(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        m = self._maps[k - 1]
        return m.origin, m.origin + np.asarray(m.states.shape) - 1

    def evaluable_bounds(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        m = self._maps[k - 1]
        return m.eval_lo, m.eval_hi

    def inject(self, k: int, site, verdict: int) -> None:
        """Force a verdict (fixtures and fault injection)."""
        m = self._maps[k - 1]
        idx = np.asarray(site) - m.origin
        if np.any(idx < 0) or np.any(idx >= m.states.shape):
            raise ValueError(f"site {tuple(site)} outside the scale-{k} site grid")
        m.states[tuple(idx)] = verdict

    def inject_map(self, k: int, origin, states: np.ndarray) -> None:
        m = self._maps[k - 1]
        start = np.asarray(origin) - m.origin
        sl = tuple(slice(int(s), int(s) + n) for s, n in zip(start, states.shape))
        m.states[sl] = states

    def verdict(self, k: int, site) -> int:
        site = np.asarray(site, dtype=np.int64)
        return int(self.region(k, site, site).ravel()[0])

    def is_good(self, k: int, site) -> bool:
        return self.verdict(k, site) == GOOD

    def region(self, k: int, lo, hi) -> np.ndarray:
        """Verdicts for the inclusive site box [lo, hi] at scale k (filled on demand)."""
        lo = np.asarray(lo, dtype=np.int64)
        hi = np.asarray(hi, dtype=np.int64)
        out = np.full(tuple(hi - lo + 1), UNEVALUATED, dtype=np.int8)
        m = self._maps[k - 1]
        g_lo = np.maximum(lo, m.origin)
        g_hi = np.minimum(hi, m.origin + np.asarray(m.states.shape) - 1)
        if np.any(g_hi < g_lo):
            return out
        self._fill(k, g_lo, g_hi)
        src = tuple(slice(int(a), int(b) + 1) for a, b in zip(g_lo - m.origin, g_hi - m.origin))
        dst = tuple(slice(int(a), int(b) + 1) for a, b in zip(g_lo - lo, g_hi - lo))
        out[dst] = m.states[src]
        return out

    def _fill(self, k: int, lo: np.ndarray, hi: np.ndarray) -> None:
        m = self._maps[k - 1]
        sl = tuple(slice(int(a), int(b) + 1) for a, b in zip(lo - m.origin, hi - m.origin))
        block = m.states[sl]
        pending = block == _PENDING
        if not pending.any():
            return
        sites = np.argwhere(pending) + lo
        inside = np.all((sites >= m.eval_lo) & (sites <= m.eval_hi), axis=1)
        out_idx = tuple((sites[~inside] - lo).T)
        block[out_idx] = UNEVALUATED
        todo = sites[inside]
        if len(todo):
            if k == 1:
                values = self._scale1(todo)
            else:
                values = self._scale_k(k, todo)
            block[tuple((todo - lo).T)] = values
        m.states[sl] = block

    def _scale1(self, sites: np.ndarray) -> np.ndarray:
        if self.view is None:
            return np.full(len(sites), UNEVALUATED, dtype=np.int8)
        h = self.h
        N1 = h.N1
        p = self.view.p
        values = np.full(len(sites), BAD, dtype=np.int8)
        fast = np.zeros(len(sites), dtype=bool)
        if h.d * (3 * N1 - 1) <= 12 * h.beta * N1:
            if self._closed_sums is None:
                self._closed_sums = [_padded_cumsum(~arr) for arr in p.data]
            lo3, hi3 = half_open_range(3 * N1)
            blo = sites * N1 + lo3 - np.asarray(p.lo)
            bhi = sites * N1 + hi3 - np.asarray(p.lo)
            closed = np.zeros(len(sites), dtype=np.int64)
            for a, S in enumerate(self._closed_sums):
                top = bhi.copy()
                top[:, a] -= 1
                closed += _box_sums(S, blo, top)
            fast = closed == 0
            values[fast] = GOOD
        for j in np.flatnonzero(~fast):
            key = tuple(int(c) for c in sites[j])
            res = scale1_verdict(p, self.view.q, key, h)
            self.full_checks += 1
            self.details[key] = Scale1Verdict(res.good, res.unique_large_cluster, res.crossing,
                                              res.short_paths, res.long_q_paths_hit)
            values[j] = GOOD if res.good else BAD
        return values

    def _scale_k(self, k: int, sites: np.ndarray) -> np.ndarray:
        lk = self.h.l[k - 1]
        lo3, hi3 = half_open_range(3 * lk)
        dep_lo = sites.min(axis=0) * lk + lo3 - lk
        dep_hi = sites.max(axis=0) * lk + hi3 + lk
        below = self.region(k - 1, dep_lo, dep_hi)
        sizes = _bad_cluster_sizes(below != GOOD)
        values = np.empty(len(sites), dtype=np.int8)
        for j, s in enumerate(sites):
            a = s * lk + lo3 - dep_lo
            b = s * lk + hi3 - dep_lo
            window = sizes[tuple(slice(int(x), int(y) + 1) for x, y in zip(a, b))]
            values[j] = GOOD if window.max() <= lk else BAD
        return values

    def bad_cluster(self, site, k: int, max_radius: int | None = None) -> set[tuple]:
        """C^(k)(site) under L1 connectivity; empty for a good site."""
        site = np.asarray(site, dtype=np.int64)
        if self.verdict(k, site) == GOOD:
            return set()
        g_lo, g_hi = self.site_bounds(k)
        r = 4
        while True:
            lo = np.maximum(site - r, g_lo)
            hi = np.minimum(site + r, g_hi)
            states = self.region(k, lo, hi)
            labels, _ = ndimage.label(states != GOOD, structure=ndimage.generate_binary_structure(self.h.d, 1))
            comp = labels == labels[tuple(site - lo)]
            pts = np.argwhere(comp)
            touches_lo = np.any(pts == 0, axis=0) & (lo > g_lo)
            touches_hi = np.any(pts == np.asarray(comp.shape) - 1, axis=0) & (hi < g_hi)
            at_grid = (np.any(pts == 0, axis=0) & (lo == g_lo)) | \
                      (np.any(pts == np.asarray(comp.shape) - 1, axis=0) & (hi == g_hi))
            if at_grid.any():
                raise BoundaryError(f"scale-{k} bad cluster of {tuple(site)} reaches the window edge")
            if not (touches_lo.any() or touches_hi.any()):
                return {tuple(int(c) for c in row) for row in pts + lo}
            if max_radius is not None and r >= max_radius:
                raise BoundaryError(f"scale-{k} bad cluster of {tuple(site)} exceeds radius {max_radius}")
            r *= 2

    def computed(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """(sites, verdicts) of every settled entry at scale k."""
        m = self._maps[k - 1]
        idx = np.argwhere(m.states != _PENDING)
        return idx + m.origin, m.states[tuple(idx.T)]


def _bad_cluster_sizes(bad: np.ndarray) -> np.ndarray:
    """Per-site size of its bad cluster (0 for good sites); clusters cut by the
    array border get an infinite size since their true extent is unknown."""
    labels, n = ndimage.label(bad, structure=ndimage.generate_binary_structure(bad.ndim, 1))
    sizes = np.bincount(labels.ravel(), minlength=n + 1).astype(float)
    border = np.zeros_like(bad)
    for a in range(bad.ndim):
        border[_edge_index(bad.ndim, a, 0)] = True
        border[_edge_index(bad.ndim, a, -1)] = True
    cut = np.unique(labels[border & bad])
    sizes[cut] = np.inf
    sizes[0] = 0
    return sizes[labels]


def _edge_index(ndim, axis, pos):
    sl = [slice(None)] * ndim
    sl[axis] = pos
    return tuple(sl)


# -- path diagnostics ---------------------------------------------------------

@dataclass(frozen=True)
class TraceResult:
    sites: np.ndarray  # unique scale-k sites met by the path, lexicographic
    bad_count: int | None


def path_sites(path, N: int) -> np.ndarray:
    pts = np.asarray(path, dtype=np.int64)
    if N > 4 * int(np.abs(pts).max(initial=0)) + 4:
        return np.zeros((1, pts.shape[1]), dtype=np.int64)
    return np.unique((pts + N // 2) // N, axis=0)


def trace_bound(length: int, N: int, d: int) -> float:
    return 3 ** d * (1 + (length + 1) / N)


def trace(path, k: int, h: ScaleHierarchy, cache: BoxStateCache | None = None) -> TraceResult:
    N = h.N[k - 1]
    sites = path_sites(path, N)
    if len(sites) > trace_bound(len(path) - 1, N, h.d):
        raise AssertionError(f"trace bound violated at scale {k}: {len(sites)} sites")
    bad = None
    if cache is not None:
        bad = sum(1 for s in sites if cache.verdict(k, s) != GOOD)
    return TraceResult(sites, bad)


def scale_horizon(path, cache: BoxStateCache, h: ScaleHierarchy) -> int | None:
    """Smallest M with no bad box met at scale M, or None when it exceeds the depth."""
    for k in range(1, h.depth + 1):
        if trace(path, k, h, cache).bad_count == 0:
            return k
    return None


def bad_counts(path, cache: BoxStateCache, h: ScaleHierarchy) -> list[int]:
    return [trace(path, k, h, cache).bad_count for k in range(1, h.depth + 1)]


def extract_spread_subset(gamma, R: int) -> set[tuple]:
    """Densest residue class of gamma modulo R Z^d (ties: smallest residue)."""
    if R < 1:
        raise ValueError("R must be >= 1")
    sites = sorted(tuple(int(c) for c in s) for s in gamma)
    if not sites:
        return set()
    classes: dict[tuple, list] = {}
    for s in sites:
        classes.setdefault(tuple(c % R for c in s), []).append(s)
    best = max(sorted(classes), key=lambda r: len(classes[r]))
    return set(classes[best])


def dump_verdicts_csv(cache: BoxStateCache, path) -> None:
    """CSV rows: scale, site coords, verdict, bad-cluster id (blank for good)."""
    d = cache.h.d
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scale"] + [f"i{a + 1}" for a in range(d)] + ["verdict", "cluster_id"])
        for k in range(1, cache.h.depth + 1):
            m = cache._maps[k - 1]
            settled = m.states != _PENDING
            labels, _ = ndimage.label(settled & (m.states != GOOD),
                                      structure=ndimage.generate_binary_structure(d, 1))
            for idx in np.argwhere(settled):
                v = int(m.states[tuple(idx)])
                cid = "" if v == GOOD else int(labels[tuple(idx)])
                w.writerow([k] + [int(c) for c in idx + m.origin] + [VERDICT_NAMES[v], cid])
