"""Finite-window bond configurations, couplings and cluster labelling.

Edge storage is per axis: for a grid of vertex shape S, ``data[a]`` has shape S
with S[a] reduced by one, and entry ``data[a][v]`` describes the edge from v to
v + e_a. The canonical (lexicographic) edge order of a window is only needed
for the random-number mapping and for snapshots.

Random streams: every uniform array is drawn from a Philox generator keyed by
(seed, stream); the k-th draw of a stream belongs to the k-th edge in canonical
order. Stream 0 is the uniform field U, streams 1, 2, 3 hold V, W, Z of the
three-variable coupling.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .lattice import path_edges

STREAM_U, STREAM_V, STREAM_W, STREAM_Z = 0, 1, 2, 3


def _edge_shape(shape, axis):
    s = list(shape)
    s[axis] -= 1
    return tuple(s)


def _axis_slice(ndim, axis, sl):
    out = [slice(None)] * ndim
    out[axis] = sl
    return tuple(out)


@dataclass(frozen=True)
class EdgeGrid:
    """Per-axis edge data over the vertex box with lower corner `lo`."""

    lo: tuple[int, ...]
    shape: tuple[int, ...]
    data: tuple[np.ndarray, ...]

    def __post_init__(self):
        for a, arr in enumerate(self.data):
            if arr.shape != _edge_shape(self.shape, a):
                raise ValueError(f"axis {a}: edge array shape {arr.shape} does not fit {self.shape}")

    @property
    def d(self) -> int:
        return len(self.shape)

    @property
    def hi(self) -> tuple[int, ...]:
        return tuple(l + s - 1 for l, s in zip(self.lo, self.shape))

    @property
    def n_vertices(self) -> int:
        return int(np.prod(self.shape))

    def contains(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.int64)
        return np.all((p >= self.lo) & (p <= self.hi), axis=-1)

    def index(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.int64) - np.asarray(self.lo)
        return np.ravel_multi_index(tuple(np.moveaxis(p, -1, 0)), self.shape)

    def coords(self, flat) -> np.ndarray:
        return np.stack(np.unravel_index(np.asarray(flat), self.shape), axis=-1) + np.asarray(self.lo)

    def restrict(self, lo, hi) -> "EdgeGrid":
        """Sub-grid on the inclusive box [lo, hi] intersected with this grid."""
        lo = np.maximum(np.asarray(lo), self.lo)
        hi = np.minimum(np.asarray(hi), self.hi)
        if np.any(hi < lo):
            raise ValueError("restriction box does not meet the grid")
        start = lo - np.asarray(self.lo)
        stop = hi - np.asarray(self.lo) + 1
        data = []
        for a, arr in enumerate(self.data):
            sl = [slice(int(b), int(e)) for b, e in zip(start, stop)]
            sl[a] = slice(int(start[a]), int(stop[a]) - 1)
            data.append(arr[tuple(sl)])
        return EdgeGrid(tuple(int(x) for x in lo), tuple(int(x) for x in stop - start), tuple(data))

    def edge_value(self, u, v):
        """Value stored for the edge {u, v} (both given as points)."""
        u = np.asarray(u)
        v = np.asarray(v)
        axis = int(np.argmax(np.abs(u - v)))
        low = np.minimum(u, v) - np.asarray(self.lo)
        return self.data[axis][tuple(low)]

    def path_values(self, path) -> np.ndarray:
        lower, axis = path_edges(path)
        if len(axis) == 0:
            return np.zeros(0, dtype=self.data[0].dtype)
        rel = lower - np.asarray(self.lo)
        out = np.empty(len(axis), dtype=self.data[0].dtype)
        for a in range(self.d):
            sel = axis == a
            if sel.any():
                out[sel] = self.data[a][tuple(rel[sel].T)]
        return out

    def edge_lists(self, mask_fn=None):
        """Flat endpoint arrays (u, v) of the edges where ``mask_fn(data[a])`` holds."""
        idx = np.arange(self.n_vertices).reshape(self.shape)
        us, vs = [], []
        for a, arr in enumerate(self.data):
            sel = arr if mask_fn is None else mask_fn(arr)
            us.append(idx[_axis_slice(self.d, a, slice(0, -1))][sel])
            vs.append(idx[_axis_slice(self.d, a, slice(1, None))][sel])
        return np.concatenate(us), np.concatenate(vs)

    def n_open(self) -> int:
        return int(sum(int(np.count_nonzero(a)) for a in self.data))


# BondGrid is an EdgeGrid whose data are booleans (edge open).
BondGrid = EdgeGrid


@dataclass(frozen=True)
class Window:
    half_width: int
    d: int = 2

    def __post_init__(self):
        if self.half_width < 1 or self.d < 1:
            raise ValueError("window needs half_width >= 1 and d >= 1")

    @property
    def lo(self) -> tuple[int, ...]:
        return (-self.half_width,) * self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (2 * self.half_width + 1,) * self.d

    @property
    def n_edges(self) -> int:
        side = 2 * self.half_width + 1
        return self.d * (side - 1) * side ** (self.d - 1)

    @cached_property
    def canonical_index(self) -> tuple[np.ndarray, ...]:
        """Per-axis arrays giving each edge's position in lexicographic order of (a, b).

        For a fixed lower endpoint a, the upper endpoint a + e_axis is
        lexicographically smaller for larger axis, so axes run in reverse.
        """
        d, shape = self.d, self.shape
        valid = np.ones(shape + (d,), dtype=bool)
        for j in range(d):
            axis = d - 1 - j
            valid[_axis_slice(d, axis, -1) + (j,)] = False
        rank = np.cumsum(valid.ravel(), dtype=np.int64).reshape(valid.shape) - 1
        return tuple(
            np.ascontiguousarray(rank[_axis_slice(d, a, slice(0, -1)) + (d - 1 - a,)])
            for a in range(d)
        )

    def from_flat(self, values: np.ndarray) -> tuple[np.ndarray, ...]:
        return tuple(values[idx] for idx in self.canonical_index)

    def to_flat(self, per_axis) -> np.ndarray:
        out = np.empty(self.n_edges, dtype=per_axis[0].dtype)
        for idx, arr in zip(self.canonical_index, per_axis):
            out[idx] = arr
        return out

    def grid(self, data) -> EdgeGrid:
        return EdgeGrid(self.lo, self.shape, tuple(data))


def stream_generator(seed: int, stream: int) -> np.random.Generator:
    key = np.array([int(seed) & 0xFFFFFFFFFFFFFFFF, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class EdgeField:
    window: Window
    values: np.ndarray  # canonical edge order
    seed: int | None = None

    def __post_init__(self):
        if self.values.shape != (self.window.n_edges,):
            raise ValueError("one value per window edge required")

    @cached_property
    def per_axis(self) -> tuple[np.ndarray, ...]:
        return self.window.from_flat(self.values)

    def grid(self) -> EdgeGrid:
        return self.window.grid(self.per_axis)


def sample_uniform_field(window: Window, seed: int, stream: int = STREAM_U) -> EdgeField:
    values = stream_generator(seed, stream).random(window.n_edges)
    return EdgeField(window, values, int(seed))


@dataclass(frozen=True)
class MaskedView:
    """What shell and bypass construction may read: q-states and the stand-in p-view.

    Under the three-variable coupling the p-view is V*Z on every edge, so the
    p-states of designated path edges (V*W) are not reachable from here.
    """

    q: BondGrid
    p: BondGrid


@dataclass(frozen=True)
class CoupledConfig:
    window: Window
    p: float
    q: float
    provenance: str
    p_open: tuple[np.ndarray, ...]
    q_open: tuple[np.ndarray, ...]
    p_view: tuple[np.ndarray, ...] = field(default=None)
    on_path: tuple[np.ndarray, ...] | None = None

    def __post_init__(self):
        if self.p_view is None:
            object.__setattr__(self, "p_view", self.p_open)

    def level(self, name: str) -> BondGrid:
        data = {"p": self.p_open, "q": self.q_open, "view": self.p_view}[name]
        return self.window.grid(data)

    def masked(self) -> MaskedView:
        return MaskedView(self.level("q"), self.level("view"))

    def is_monotone(self) -> bool:
        return all(not np.any(p & ~q) for p, q in zip(self.p_open, self.q_open))


def _check_levels(p, q):
    if not (0.0 <= p <= q <= 1.0):
        raise ValueError(f"need 0 <= p <= q <= 1, got p={p}, q={q}")


def monotone_config(fld: EdgeField, p: float, q: float) -> CoupledConfig:
    _check_levels(p, q)
    u = fld.per_axis
    return CoupledConfig(fld.window, p, q, "monotone",
                         tuple(x <= p for x in u), tuple(x <= q for x in u))


def path_mask(window: Window, path) -> tuple[np.ndarray, ...]:
    """Per-axis boolean arrays marking the edges traversed by `path`."""
    masks = tuple(np.zeros(_edge_shape(window.shape, a), dtype=bool) for a in range(window.d))
    if path is None or len(path) < 2:
        return masks
    lower, axis = path_edges(path)
    rel = lower + window.half_width
    for a in range(window.d):
        sel = axis == a
        masks[a][tuple(rel[sel].T)] = True
    return masks


def sample_three_rv(window: Window, p: float, q: float, seed: int):
    """Bernoulli arrays V ~ B(q), W ~ B(p/q), Z ~ B(p/q) in canonical order."""
    _check_levels(p, q)
    n = window.n_edges
    ratio = p / q if q > 0 else 0.0
    v = stream_generator(seed, STREAM_V).random(n) < q
    w = stream_generator(seed, STREAM_W).random(n) < ratio
    z = stream_generator(seed, STREAM_Z).random(n) < ratio
    if q == 1.0:
        v[:] = True
    if ratio == 1.0:
        w[:] = True
        z[:] = True
    return v, w, z


def three_rv_coupling(window: Window, p: float, q: float, path, seed: int) -> CoupledConfig:
    v, w, z = (window.from_flat(x) for x in sample_three_rv(window, p, q, seed))
    on = path_mask(window, path)
    view = tuple(a & c for a, c in zip(v, z))
    p_open = tuple(np.where(m, a & b, vz) for m, a, b, vz in zip(on, v, w, view))
    return CoupledConfig(window, p, q, "three_rv", p_open, tuple(v), view, on)


# -- clusters ---------------------------------------------------------------

@dataclass(frozen=True)
class ClusterLabeling:
    grid: BondGrid
    labels: np.ndarray  # flat, per vertex of grid; ids ordered by smallest vertex
    sizes: np.ndarray

    @property
    def n_clusters(self) -> int:
        return len(self.sizes)

    def members(self, cid: int) -> np.ndarray:
        if not 0 <= cid < self.n_clusters:
            raise KeyError(cid)
        return self.grid.coords(np.flatnonzero(self.labels == cid))

    def label_of(self, point) -> int:
        return int(self.labels[self.grid.index(point)])


def _canonical_labels(labels: np.ndarray) -> np.ndarray:
    _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(len(first), dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(len(first))
    return rank[inv.ravel()]


def cluster_labeling(grid: BondGrid, lo=None, hi=None) -> ClusterLabeling:
    if lo is not None:
        grid = grid.restrict(lo, hi)
    n = grid.n_vertices
    u, v = grid.edge_lists()
    adj = sp.csr_matrix((np.ones(len(u), dtype=np.int8), (u, v)), shape=(n, n))
    _, labels = connected_components(adj, directed=False)
    labels = _canonical_labels(labels)
    return ClusterLabeling(grid, labels, np.bincount(labels))


def touches_all_faces(coords: np.ndarray, lo, hi) -> bool:
    lo = np.asarray(lo)
    hi = np.asarray(hi)
    return bool(np.all(np.any(coords == lo, axis=0)) and np.all(np.any(coords == hi, axis=0)))


def crossing_clusters(grid: BondGrid, lo, hi) -> tuple[ClusterLabeling, list[int]]:
    """Clusters of the configuration restricted to [lo, hi] meeting every face."""
    lab = cluster_labeling(grid, lo, hi)
    sub = lab.grid
    coords = sub.coords(np.arange(sub.n_vertices))
    out = []
    for cid in range(lab.n_clusters):
        if lab.sizes[cid] == 1 and sub.n_vertices > 1:
            continue
        pts = coords[lab.labels == cid]
        if touches_all_faces(pts, sub.lo, sub.hi):
            out.append(cid)
    return lab, out


def cluster_diameter(lab: ClusterLabeling, cid: int) -> int:
    pts = lab.members(cid)
    return int((pts.max(axis=0) - pts.min(axis=0)).max())


def giant_cluster(grid: BondGrid) -> tuple[ClusterLabeling, int]:
    """Largest cluster; ties go to the one with the smallest vertex (lowest id)."""
    if grid.n_vertices == 0:
        raise ValueError("empty window")
    lab = cluster_labeling(grid)
    return lab, int(np.argmax(lab.sizes))


# -- general passage times -------------------------------------------------

@dataclass(frozen=True)
class QuantileDistribution:
    """Law on [0, +inf]: mass `finite_mass` spread on atoms `values` with
    cumulative weights `cum` (conditional on finiteness), the rest at +inf.

    The quantile at t is the smallest atom whose cumulative weight reaches t,
    i.e. inf{x : F(x) >= t} for the conditional law.
    """

    finite_mass: float
    cum: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        c = np.asarray(self.cum, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if len(c) == 0 or len(c) != len(v):
            raise ValueError("quantile table needs matching non-empty breakpoints")
        if np.any(np.diff(c) <= 0) or c[0] <= 0 or abs(c[-1] - 1.0) > 1e-12:
            raise ValueError("cumulative weights must increase strictly to 1")
        if np.any(np.diff(v) <= 0) or v[0] < 0:
            raise ValueError("atoms must be non-negative and increasing")
        if not 0.0 <= self.finite_mass <= 1.0:
            raise ValueError("finite_mass outside [0, 1]")

    @classmethod
    def atoms(cls, values, weights, finite_mass: float = 1.0) -> "QuantileDistribution":
        w = np.asarray(weights, dtype=float)
        c = np.cumsum(w / w.sum())
        c[-1] = 1.0
        return cls(finite_mass, tuple(float(x) for x in c), tuple(float(x) for x in values))

    @classmethod
    def dirac(cls, value: float, finite_mass: float = 1.0) -> "QuantileDistribution":
        return cls(finite_mass, (1.0,), (float(value),))

    @property
    def weights(self) -> np.ndarray:
        return np.diff(np.concatenate([[0.0], self.cum]))

    def quantile(self, t) -> np.ndarray:
        idx = np.searchsorted(np.asarray(self.cum), np.asarray(t), side="left")
        return np.asarray(self.values)[np.minimum(idx, len(self.values) - 1)]

    def mass(self, lo: float, hi: float, lo_closed=True, hi_closed=True) -> float:
        """Mass of the interval between lo and hi (full law, +inf excluded)."""
        v = np.asarray(self.values)
        left = v >= lo if lo_closed else v > lo
        right = v <= hi if hi_closed else v < hi
        return float(self.finite_mass * self.weights[left & right].sum())

    def sup_quantile_gap(self, other: "QuantileDistribution") -> float:
        """sup over t in ]0, 1] of |F^{-1}(t) - G^{-1}(t)|; both are step functions
        constant on intervals between merged breakpoints."""
        bp = np.union1d(self.cum, other.cum)
        left = np.concatenate([[0.0], bp[:-1]])
        mids = (left + bp) / 2
        return float(np.max(np.abs(self.quantile(mids) - other.quantile(mids))))


def quantile_passage_times(fld: EdgeField, dist: QuantileDistribution, open_level) -> EdgeGrid:
    """Per-edge time: dist quantile of U(e) on open edges, +inf on closed ones.

    `open_level` is a per-axis tuple of boolean masks.
    """
    data = tuple(np.where(o, dist.quantile(u), np.inf) for u, o in zip(fld.per_axis, open_level))
    return fld.window.grid(data)


# -- snapshots ---------------------------------------------------------------

_MAGIC = b"PLEF"
_VERSION = 1
_HEADER = struct.Struct("<4sHHIQ")


def save_field(fld: EdgeField, path) -> None:
    seed = 0 if fld.seed is None else fld.seed
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, fld.window.d, fld.window.half_width, seed))
        fh.write(np.ascontiguousarray(fld.values, dtype="<f8").tobytes())


def load_field(path) -> EdgeField:
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, version, d, L, seed = _HEADER.unpack_from(raw)
    if magic != _MAGIC or version != _VERSION:
        raise ValueError(f"{path}: not an edge-field snapshot (version {version})")
    values = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    return EdgeField(Window(L, d), values, seed)


def trial_seed(master_seed: int, trial: int) -> int:
    """Per-trial 64-bit seed, a pure function of (master seed, trial index)."""
    ss = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, int(trial)])
    return int(ss.generate_state(1, np.uint64)[0])
