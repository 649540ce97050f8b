"""Integer-lattice geometry on Z^d.

Points are tuples of ints, site sets are Python sets of such tuples, and paths
are integer arrays of shape (len + 1, d). Boxes follow the half-open convention
B_N = [-N/2, N/2[^d, translated by i*N for site i; the enlarged box around site
i is i*N + B_{3N}.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy import ndimage

Point = tuple[int, ...]


@dataclass(frozen=True, order=True)
class Edge:
    """Nearest-neighbour edge stored with a < b lexicographically."""

    a: Point
    b: Point

    def __post_init__(self):
        if sum(abs(x - y) for x, y in zip(self.a, self.b)) != 1:
            raise ValueError(f"not a lattice edge: {self.a} {self.b}")
        if self.b < self.a:
            lo, hi = self.b, self.a
            object.__setattr__(self, "a", lo)
            object.__setattr__(self, "b", hi)

    @classmethod
    def between(cls, u: Iterable[int], v: Iterable[int]) -> "Edge":
        return cls(tuple(int(c) for c in u), tuple(int(c) for c in v))

    @property
    def axis(self) -> int:
        return next(k for k, (x, y) in enumerate(zip(self.a, self.b)) if x != y)


@dataclass(frozen=True)
class BoxSpec:
    scale: int
    site: Point
    enlarged: bool = False


def half_open_range(N: int) -> tuple[int, int]:
    """Inclusive integer bounds of [-N/2, N/2[."""
    return -(N // 2), (N + 1) // 2 - 1


def box_bounds(N: int, site, enlarged: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Inclusive corners (lo, hi) of B_N(site) or of the enlarged box B'_N(site)."""
    site = np.asarray(site, dtype=np.int64)
    lo, hi = half_open_range(3 * N if enlarged else N)
    return site * N + lo, site * N + hi


def box_sites(spec: BoxSpec, hierarchy) -> set[Point]:
    if not 1 <= spec.scale <= hierarchy.depth:
        raise ValueError(f"scale {spec.scale} outside hierarchy depth {hierarchy.depth}")
    lo, hi = box_bounds(hierarchy.N[spec.scale - 1], spec.site, spec.enlarged)
    axes = [range(int(a), int(b) + 1) for a, b in zip(lo, hi)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))
    return {tuple(int(c) for c in row) for row in grid}


def site_of(points, N: int) -> np.ndarray:
    """Index of the N-box containing each point (vectorised over the last axis)."""
    x = np.asarray(points, dtype=np.int64)
    return (x + N // 2) // N


def dist_to_boxes(points, lo, hi) -> np.ndarray:
    """L1 distance from each point to each axis-aligned box, shape (n_points, n_boxes)."""
    p = np.asarray(points, dtype=np.int64)[:, None, :]
    lo = np.asarray(lo, dtype=np.int64)[None, :, :]
    hi = np.asarray(hi, dtype=np.int64)[None, :, :]
    gap = np.maximum(0, np.maximum(lo - p, p - hi))
    return gap.sum(axis=-1)


# -- site-set topology ------------------------------------------------------

def sites_to_mask(sites, margin: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Boolean mask of a site set on its bounding box enlarged by `margin`."""
    arr = np.asarray(sorted(sites), dtype=np.int64)
    origin = arr.min(axis=0) - margin
    shape = tuple(arr.max(axis=0) - origin + margin + 1)
    mask = np.zeros(shape, dtype=bool)
    mask[tuple((arr - origin).T)] = True
    return mask, origin


def mask_to_sites(mask: np.ndarray, origin) -> set[Point]:
    idx = np.argwhere(mask) + np.asarray(origin, dtype=np.int64)
    return {tuple(int(c) for c in row) for row in idx}


def outside_mask(mask: np.ndarray) -> np.ndarray:
    """Cells of ~mask connected (L1) to the frame of the array.

    The caller is responsible for leaving at least one free layer around `mask`.
    """
    free = ~mask
    labels, _ = ndimage.label(free, structure=ndimage.generate_binary_structure(mask.ndim, 1))
    frame = np.zeros_like(mask)
    for ax in range(mask.ndim):
        sl = [slice(None)] * mask.ndim
        sl[ax] = 0
        frame[tuple(sl)] = True
        sl[ax] = -1
        frame[tuple(sl)] = True
    keep = np.unique(labels[frame & free])
    return np.isin(labels, keep[keep > 0])


def exterior_boundary_mask(mask: np.ndarray) -> np.ndarray:
    near = ndimage.binary_dilation(mask, structure=ndimage.generate_binary_structure(mask.ndim, 1))
    return near & outside_mask(mask)


def interior_mask(mask: np.ndarray) -> np.ndarray:
    """Cells outside `mask` that cannot reach the frame."""
    return ~mask & ~outside_mask(mask)


def exterior_boundary(C) -> set[Point]:
    if not C:
        return set()
    mask, origin = sites_to_mask(C)
    return mask_to_sites(exterior_boundary_mask(mask), origin)


def interior(C) -> set[Point]:
    if not C:
        return set()
    mask, origin = sites_to_mask(C)
    return mask_to_sites(interior_mask(mask), origin)


def star_components(S) -> list[set[Point]]:
    """Partition of S into L-infinity adjacency components, ordered by smallest member."""
    if not S:
        return []
    mask, origin = sites_to_mask(S, margin=1)
    labels, n = ndimage.label(mask, structure=np.ones((3,) * mask.ndim, dtype=bool))
    comps = [mask_to_sites(labels == k, origin) for k in range(1, n + 1)]
    return sorted(comps, key=min)


def l1_components(S) -> list[set[Point]]:
    if not S:
        return []
    mask, origin = sites_to_mask(S, margin=1)
    labels, n = ndimage.label(mask, structure=ndimage.generate_binary_structure(mask.ndim, 1))
    return sorted((mask_to_sites(labels == k, origin) for k in range(1, n + 1)), key=min)


def star_neighbours(site: Point) -> list[Point]:
    d = len(site)
    offs = np.stack(np.meshgrid(*[[-1, 0, 1]] * d, indexing="ij"), -1).reshape(-1, d)
    return [tuple(int(s + o) for s, o in zip(site, off)) for off in offs if any(off)]


def enumerate_star_animals(m: int, d: int = 2) -> int:
    """Number of *-connected m-site sets containing the origin (test oracle)."""
    if m > 5 or d != 2:
        raise ValueError("animal enumeration is limited to m <= 5, d = 2")
    if m < 1:
        return 0
    origin = (0,) * d
    level = {frozenset([origin])}
    for _ in range(m - 1):
        nxt = set()
        for animal in level:
            for s in animal:
                for t in star_neighbours(s):
                    if t not in animal:
                        nxt.add(animal | {t})
        level = nxt
    return len(level)


# -- paths ------------------------------------------------------------------

def as_path(vertices) -> np.ndarray:
    path = np.asarray(vertices, dtype=np.int64)
    if path.ndim != 2:
        raise ValueError("a path is a (len + 1, d) array")
    return path


def is_lattice_path(path) -> bool:
    path = as_path(path)
    return len(path) == 0 or bool(np.all(np.abs(np.diff(path, axis=0)).sum(axis=1) == 1))


def path_edges(path) -> tuple[np.ndarray, np.ndarray]:
    """Lower endpoint and axis of every step of `path`."""
    path = as_path(path)
    step = np.diff(path, axis=0)
    axis = np.argmax(np.abs(step), axis=1)
    lower = np.minimum(path[:-1], path[1:])
    return lower, axis


def edge_set(path) -> set[Edge]:
    path = as_path(path)
    return {Edge.between(u, v) for u, v in zip(path[:-1], path[1:])}


def loop_erase(path) -> np.ndarray:
    """Chronological loop erasure: the result is a simple path with the same endpoints."""
    path = as_path(path)
    out: list[tuple] = []
    where: dict[tuple, int] = {}
    for v in map(tuple, path.tolist()):
        if v in where:
            cut = where[v]
            for w in out[cut + 1:]:
                del where[w]
            del out[cut + 1:]
        else:
            where[v] = len(out)
            out.append(v)
    return np.asarray(out, dtype=np.int64).reshape(-1, path.shape[1])
