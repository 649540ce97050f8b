"""Shells of scale-1 good boxes around the edges of a q-open path.

Only the verdict cache is consulted, and the cache itself only sees the masked
view of the configuration.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .lattice import (Edge, box_bounds, dist_to_boxes, exterior_boundary_mask, half_open_range,
                      interior_mask, mask_to_sites, sites_to_mask, star_components)
from .renorm import GOOD, BoundaryError, BoxStateCache, ScaleHierarchy, bad_counts, scale_horizon


class HorizonError(RuntimeError):
    """k(e) would reach the scale horizon M (or the hierarchy depth)."""


class ShellInvariantError(AssertionError):
    """A shell post that must hold for honest verdicts failed."""


@dataclass
class Shell:
    edge: Edge
    boxes: set
    interior_sites: set
    k_of_e: int
    dist_to_edge: int = 0
    dist_to_endpoints: int = 0
    size_bound: int = 0
    proof_side_ok: bool = True


@dataclass
class ShellFamily:
    path_length: int
    horizon: int | None
    trimmed_edges: list = field(default_factory=list)
    shells: dict = field(default_factory=dict)  # Edge -> Shell
    dropped: dict = field(default_factory=dict)  # Edge -> reason
    bad_counts: list = field(default_factory=list)
    aggregate_bound: int | None = None

    @property
    def total_size(self) -> int:
        return sum(len(s.boxes) for s in self.shells.values())

    @property
    def total_size_sq(self) -> int:
        return sum(len(s.boxes) ** 2 for s in self.shells.values())


def site_at(point, N: int) -> np.ndarray:
    return (np.asarray(point, dtype=np.int64) + N // 2) // N


def k_of_edge(e: Edge, cache: BoxStateCache, h: ScaleHierarchy, horizon: int | None = None) -> int:
    """2 if e_3 is good, else the largest k with e_3..e_k all bad (must stay below M)."""
    if h.depth >= 3 and cache.is_good(3, site_at(e.a, h.N[2])):
        return 2
    k = 3
    while k + 1 <= h.depth and not cache.is_good(k + 1, site_at(e.a, h.N[k])):
        k += 1
    limit = h.depth - 1 if horizon is None else min(horizon - 1, h.depth - 1)
    if k > limit:
        raise HorizonError(f"k(e) for {e} reaches the horizon (k={k}, M={horizon}, depth={h.depth})")
    return k


def shell_size_bound(k: int, h: ScaleHierarchy) -> int:
    d, N, l = h.d, h.N, h.l
    return 2 * d * 3 ** d * (3 * d) ** k * l[k] * (N[k - 1] // N[0]) ** (d + 1)


def aggregate_bound(path_length: int, counts: list, M: int, h: ScaleHierarchy) -> int:
    """3^{2d} 4 d^2 ((3d)^4 |g| N3^2 N2^{2d} + sum_{k=3}^{M-1} n_k N_{k+1}^2 N_k^{3d} (3d)^{2k} d)."""
    d, N = h.d, h.N
    total = (3 * d) ** 4 * path_length * N[2] ** 2 * N[1] ** (2 * d)
    for k in range(3, M):
        total += counts[k - 1] * N[k] ** 2 * N[k - 1] ** (3 * d) * (3 * d) ** (2 * k) * d
    return 3 ** (2 * d) * 4 * d ** 2 * total


def _crop(mask, origin):
    idx = np.argwhere(mask)
    lo, hi = idx.min(axis=0), idx.max(axis=0) + 1
    return mask[tuple(slice(a, b) for a, b in zip(lo, hi))], origin + lo


def _pad(mask, origin, margin=2):
    return np.pad(mask, margin), origin - margin


def _absorb_bad_clusters(mask, origin, k, cache: BoxStateCache):
    """Lambda := Lambda U (bad clusters at scale k of the sites in its exterior boundary)."""
    mask, origin = _pad(*_crop(mask, origin))
    bnd = np.argwhere(exterior_boundary_mask(mask)) + origin
    states = cache.region(k, bnd.min(axis=0), bnd.max(axis=0))
    verdict = states[tuple((bnd - bnd.min(axis=0)).T)]
    sites = set(map(tuple, (origin + np.argwhere(mask)).tolist()))
    for s in bnd[verdict != GOOD]:
        key = tuple(int(c) for c in s)
        if key in sites:
            continue
        sites |= cache.bad_cluster(s, k)
    return sites_to_mask(sites)


def _refine(mask, origin, l: int):
    """Replace every scale-j site by its l^d children at scale j-1."""
    mask, origin = _crop(mask, origin)
    fine = np.kron(mask, np.ones((l,) * mask.ndim, dtype=bool)).astype(bool)
    return fine, origin * l + half_open_range(l)[0]


def shell_core(e_site: np.ndarray, k: int, cache: BoxStateCache, h: ScaleHierarchy):
    """Lambda_1 (as a mask) for the descent started at scale k around site e_k."""
    d = h.d
    block = np.ones((3,) * d, dtype=bool)
    mask, origin = _pad(block, e_site - 1)
    mask, origin = _absorb_bad_clusters(mask, origin, k, cache)
    for j in range(k, 1, -1):
        mask, origin = _refine(mask, origin, h.l[j - 1])
        mask, origin = _absorb_bad_clusters(mask, origin, j - 1, cache)
    return _pad(*_crop(mask, origin))


@dataclass
class ShellGeometry:
    """Shell and interior of one descent, with box corners for distance queries."""

    boxes: set
    interior_sites: set
    box_lo: np.ndarray
    box_hi: np.ndarray
    inner_lo: np.ndarray
    inner_hi: np.ndarray


def _corners(sites, N):
    arr = np.asarray(sorted(sites), dtype=np.int64)
    return box_bounds(N, arr)


def shell_geometry(core, k: int, cache: BoxStateCache, h: ScaleHierarchy) -> ShellGeometry:
    """Shell = exterior boundary of Lambda_1, checked for the edge-independent posts."""
    lam, origin = core
    shell_mask = exterior_boundary_mask(lam)
    boxes = mask_to_sites(shell_mask, origin)
    inner = mask_to_sites(interior_mask(shell_mask), origin)
    verify_structure(boxes, inner, k, cache, h)
    return ShellGeometry(boxes, inner, *_corners(boxes, h.N1), *_corners(inner, h.N1))


def build_shell(e: Edge, path, cache: BoxStateCache, h: ScaleHierarchy, k: int | None = None,
                geom: ShellGeometry | None = None) -> Shell:
    """Descend from scale k(e) to scale 1 and verify the shell posts.

    Raises ShellInvariantError for posts that honest verdicts guarantee, and
    BoundaryError when post (c) cannot be certified (the caller drops the edge).
    """
    if k is None:
        k = k_of_edge(e, cache, h)
    if geom is None:
        core = shell_core(site_at(e.a, h.N[k - 1]), k, cache, h)
        geom = shell_geometry(core, k, cache, h)
    shell = Shell(e, geom.boxes, geom.interior_sites, k)
    verify_edge_posts(shell, geom, path, h)
    return shell


def _backed_by_view(sites: np.ndarray, cache: BoxStateCache, h: ScaleHierarchy) -> np.ndarray:
    """Cross-check cached good verdicts against the configuration they came from."""
    ok = np.zeros(len(sites), dtype=bool)
    p = cache.view.p
    for j, s in enumerate(map(tuple, sites.tolist())):
        if s in cache.details:
            ok[j] = cache.details[s].good
            continue
        lo, hi = box_bounds(h.N1, s, enlarged=True)
        if np.any(lo < p.lo) or np.any(hi > p.hi):
            continue
        rel_lo, rel_hi = lo - np.asarray(p.lo), hi - np.asarray(p.lo)
        ok[j] = True
        for a, arr in enumerate(p.data):
            sl = [slice(int(x), int(y) + 1) for x, y in zip(rel_lo, rel_hi)]
            sl[a] = slice(int(rel_lo[a]), int(rel_hi[a]))
            if not arr[tuple(sl)].all():
                ok[j] = False
                break
    return ok


def verify_structure(boxes: set, inner: set, k: int, cache: BoxStateCache, h: ScaleHierarchy) -> None:
    problems = []
    if not boxes:
        raise ShellInvariantError("empty shell")
    if len(star_components(boxes)) != 1:
        problems.append("not *-connected")
    mask, origin = sites_to_mask(inner)
    if mask_to_sites(exterior_boundary_mask(mask), origin) != boxes:
        problems.append("exterior boundary of interior differs from shell")
    arr = np.asarray(sorted(boxes), dtype=np.int64)
    lo, hi = arr.min(axis=0), arr.max(axis=0)
    states = cache.region(1, lo, hi)[tuple((arr - lo).T)]
    if np.any(states != GOOD):
        problems.append(f"{int(np.sum(states != GOOD))} shell sites not good in cache")
    elif cache.view is not None:
        backed = _backed_by_view(arr, cache, h)
        if not backed.all():
            problems.append(f"shell site {tuple(int(c) for c in arr[~backed][0])} verdict not backed by the configuration")
    bound = shell_size_bound(k, h)
    if len(boxes) > bound:
        problems.append(f"post (d): |shell| {len(boxes)} > {bound}")
    if problems:
        raise ShellInvariantError("; ".join(problems))


def verify_edge_posts(shell: Shell, geom: ShellGeometry, path, h: ScaleHierarchy) -> None:
    e, N1 = shell.edge, h.N1
    ends = np.array([e.a, e.b])
    if not all(tuple(int(c) for c in site_at(v, N1)) in geom.interior_sites for v in ends):
        raise ShellInvariantError(f"{e}: edge not inside the interior")
    shell.dist_to_edge = int(dist_to_boxes(ends, geom.box_lo, geom.box_hi).min())
    if shell.dist_to_edge < h.shell_distance():
        raise ShellInvariantError(f"{e}: post (b): distance {shell.dist_to_edge} < {h.shell_distance()}")
    shell.size_bound = shell_size_bound(shell.k_of_e, h)
    path = np.asarray(path)
    shell.dist_to_endpoints = int(dist_to_boxes(path[[0, -1]], geom.inner_lo, geom.inner_hi).min())
    if shell.dist_to_endpoints < N1:
        raise BoundaryError(f"post (c) fails for {e}: distance {shell.dist_to_endpoints} < {N1}")


def trimmed_edges(path, M: int | None, h: ScaleHierarchy) -> list[tuple[int, Edge]]:
    """(index, edge) for the path steps outside B_{4N_M} around both endpoints."""
    path = np.asarray(path, dtype=np.int64)
    if M is None or len(path) < 2:
        return []
    lo, hi = half_open_range(4 * h.N[M - 1])
    def outside(v, c):
        rel = v - c
        return ~np.all((rel >= lo) & (rel <= hi), axis=-1)
    ok = outside(path, path[0]) & outside(path, path[-1])
    keep = ok[:-1] & ok[1:]
    return [(int(j), Edge.between(path[j], path[j + 1])) for j in np.flatnonzero(keep)]


def shells_for_path(path, cache: BoxStateCache, h: ScaleHierarchy) -> ShellFamily:
    path = np.asarray(path, dtype=np.int64)
    M = scale_horizon(path, cache, h)
    counts = bad_counts(path, cache, h)
    fam = ShellFamily(len(path) - 1, M, trimmed_edges(path, M, h), bad_counts=counts)
    cores: dict = {}
    hits: dict = {}
    path_site_keys = [tuple(s) for s in site_at(path, h.N1).tolist()]
    for j, e in fam.trimmed_edges:
        try:
            k = k_of_edge(e, cache, h, M)
            key = (k, tuple(int(c) for c in site_at(e.a, h.N[k - 1])))
            if key not in cores:
                cores[key] = shell_geometry(shell_core(np.asarray(key[1]), k, cache, h), k, cache, h)
            shell = build_shell(e, path, cache, h, k, cores[key])
        except HorizonError:
            fam.dropped[e] = "horizon"
            continue
        except BoundaryError as exc:
            fam.dropped[e] = "post_c" if "post (c)" in str(exc) else "boundary"
            continue
        proof_margin = 2 * h.N[(M or 1) - 1] - 2 * h.N[k - 1] - sum(h.N[1:k + 1])
        shell.proof_side_ok = shell.dist_to_endpoints >= proof_margin
        if key not in hits:
            hits[key] = np.array([s in shell.boxes for s in path_site_keys])
        hit = hits[key]
        if not (hit[:j + 1].any() and hit[j + 1:].any()):
            raise ShellInvariantError(f"path does not enter and exit the shell of {e}")
        fam.shells[e] = shell
    if fam.shells:
        if h.depth < 3:
            raise ShellInvariantError("aggregate bound needs N_3")
        fam.aggregate_bound = aggregate_bound(len(path) - 1, counts, M, h)
        if fam.total_size_sq > fam.aggregate_bound:
            raise ShellInvariantError(
                f"aggregate: sum |shell|^2 = {fam.total_size_sq} > {fam.aggregate_bound}")
    return fam


def dump_shells_json(family: ShellFamily, path) -> None:
    rows = [{"edge": [list(s.edge.a), list(s.edge.b)], "k": s.k_of_e,
             "shell": sorted(list(x) for x in s.boxes), "interior_size": len(s.interior_sites)}
            for s in sorted(family.shells.values(), key=lambda s: s.edge)]
    with open(path, "w") as fh:
        json.dump({"horizon": family.horizon, "dropped": len(family.dropped), "shells": rows}, fh)
