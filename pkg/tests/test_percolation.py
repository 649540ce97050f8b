import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import grid_graph, union_find_labels
from percolab.percolation import (EdgeField, QuantileDistribution, Window, cluster_labeling, crossing_clusters,
                                  giant_cluster, load_field, monotone_config, path_mask, sample_three_rv,
                                  sample_uniform_field, save_field, stream_generator, three_rv_coupling,
                                  trial_seed)


def _all_edges_sorted(window):
    r = range(-window.half_width, window.half_width + 1)
    edges = []
    for v in itertools.product(r, repeat=window.d):
        for a in range(window.d):
            w = list(v)
            w[a] += 1
            if w[a] <= window.half_width:
                edges.append((v, tuple(w), a))
    return sorted(edges, key=lambda e: (e[0], e[1]))


@pytest.mark.parametrize("L,d", [(1, 2), (2, 2), (1, 3)])
def test_canonical_order_is_lexicographic(L, d):
    w = Window(L, d)
    ranks = w.canonical_index
    for k, (v, _, a) in enumerate(_all_edges_sorted(w)):
        assert ranks[a][tuple(c + L for c in v)] == k
    assert w.n_edges == len(_all_edges_sorted(w))


def test_flat_round_trip():
    w = Window(3)
    vals = np.arange(w.n_edges, dtype=float)
    assert np.array_equal(w.to_flat(w.from_flat(vals)), vals)


def test_streams_are_reproducible_and_distinct():
    a = stream_generator(7, 0).random(5)
    assert np.array_equal(a, stream_generator(7, 0).random(5))
    assert not np.array_equal(a, stream_generator(7, 1).random(5))
    assert not np.array_equal(a, stream_generator(8, 0).random(5))
    assert trial_seed(3, 4) == trial_seed(3, 4) != trial_seed(3, 5)


def test_uniform_field_first_draw_goes_to_first_edge():
    w = Window(2)
    fld = sample_uniform_field(w, 11)
    first = stream_generator(11, 0).random(1)[0]
    # lexicographically first edge: ((-2,-2), (-2,-1)) which is axis 1
    assert fld.per_axis[1][0, 0] == first


def test_open_fraction_is_binomial():
    w = Window(60)
    fld = sample_uniform_field(w, 5)
    p = 0.7
    frac = float(np.mean(fld.values <= p))
    sd = np.sqrt(p * (1 - p) / w.n_edges)
    assert abs(frac - p) < 5 * sd


def test_monotone_config_nests_and_checks_levels():
    fld = sample_uniform_field(Window(10), 1)
    cfg = monotone_config(fld, 0.6, 0.8)
    assert cfg.is_monotone()
    with pytest.raises(ValueError):
        monotone_config(fld, 0.8, 0.6)


def test_three_rv_view_ignores_path_and_levels_nest():
    w = Window(8)
    path = np.array([(x, 0) for x in range(-5, 6)])
    a = three_rv_coupling(w, 0.6, 0.8, path, 3)
    b = three_rv_coupling(w, 0.6, 0.8, None, 3)
    assert a.is_monotone()
    for x, y in zip(a.p_view, b.p_view):
        assert np.array_equal(x, y)
    v, wv, z = (w.from_flat(t) for t in sample_three_rv(w, 0.6, 0.8, 3))
    on = path_mask(w, path)
    for ax in range(2):
        assert np.array_equal(a.p_open[ax][on[ax]], (v[ax] & wv[ax])[on[ax]])
        assert np.array_equal(a.p_open[ax][~on[ax]], (v[ax] & z[ax])[~on[ax]])
    assert np.count_nonzero(on[0]) == 10


def test_three_rv_degenerate_levels():
    w = Window(4)
    v, wv, z = sample_three_rv(w, 0.7, 0.7, 2)
    assert wv.all() and z.all()
    v, _, _ = sample_three_rv(w, 0.3, 1.0, 2)
    assert v.all()


def _grid_from_seed(L, p, seed):
    w = Window(L)
    fld = sample_uniform_field(w, seed)
    return w.grid(tuple(a <= p for a in fld.per_axis))


def _adj(grid):
    def is_open(u, v):
        return bool(grid.edge_value(u, v))
    return grid_graph(grid.shape, grid.lo, is_open)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.floats(0.2, 0.8), st.integers(0, 2 ** 32))
def test_cluster_labeling_matches_union_find(L, p, seed):
    grid = _grid_from_seed(L, p, seed)
    lab = cluster_labeling(grid)
    ours = [{tuple(int(c) for c in v) for v in lab.members(k)} for k in range(lab.n_clusters)]
    assert ours == union_find_labels(_adj(grid))


def test_giant_and_members_errors():
    grid = _grid_from_seed(5, 1.0, 0)
    lab, cid = giant_cluster(grid)
    assert lab.n_clusters == 1 and cid == 0 and lab.sizes[0] == 121
    with pytest.raises(KeyError):
        lab.members(5)


def test_giant_tie_goes_to_smallest_vertex():
    grid = _grid_from_seed(1, 0.0, 0)  # nine isolated vertices
    lab, cid = giant_cluster(grid)
    assert cid == 0 and tuple(lab.members(0)[0]) == (-1, -1)


def test_crossing_clusters_skip_non_crossing():
    grid = _grid_from_seed(4, 1.0, 0)
    lab, ids = crossing_clusters(grid, (-2, -2), (2, 2))
    assert len(ids) == 1


def _quantile_oracle(dist, t):
    cum = 0.0
    for v, w in zip(dist.values, dist.weights):
        cum += w
        if cum >= t - 1e-15:
            return v
    return dist.values[-1]


tables = st.lists(st.tuples(st.floats(0, 10), st.floats(0.05, 1)), min_size=1, max_size=5,
                  unique_by=lambda x: round(x[0], 6))


@given(tables, st.floats(0.001, 1.0))
def test_quantile_matches_definition(rows, t):
    rows = sorted(rows)
    if any(b[0] - a[0] < 1e-9 for a, b in zip(rows, rows[1:])):
        return
    dist = QuantileDistribution.atoms([r[0] for r in rows], [r[1] for r in rows])
    assert dist.quantile(t) == _quantile_oracle(dist, t)


@given(tables, tables)
def test_sup_quantile_gap_matches_dense_scan(r1, r2):
    def make(rows):
        rows = sorted(rows)
        if any(b[0] - a[0] < 1e-9 for a, b in zip(rows, rows[1:])):
            return None
        return QuantileDistribution.atoms([r[0] for r in rows], [r[1] for r in rows])
    F, G = make(r1), make(r2)
    if F is None or G is None:
        return
    ts = np.unique(np.concatenate([F.cum, G.cum]))
    probes = np.concatenate([ts, np.linspace(1e-6, 1, 2001)])
    dense = max(abs(_quantile_oracle(F, t) - _quantile_oracle(G, t)) for t in probes)
    assert F.sup_quantile_gap(G) == pytest.approx(dense, abs=1e-12)


def test_quantile_table_validation():
    with pytest.raises(ValueError):
        QuantileDistribution(1.0, (0.5, 0.4), (1.0, 2.0))
    with pytest.raises(ValueError):
        QuantileDistribution(1.0, (0.5, 1.0), (2.0, 1.0))
    with pytest.raises(ValueError):
        QuantileDistribution(1.5, (1.0,), (1.0,))
    d = QuantileDistribution.atoms([0.0, 1.0, 3.0], [0.2, 0.3, 0.5], finite_mass=0.9)
    assert d.mass(0, 0) == pytest.approx(0.18)
    assert d.mass(0, 1, lo_closed=False) == pytest.approx(0.27)


def test_snapshot_round_trip(tmp_path):
    fld = sample_uniform_field(Window(5), 99)
    p = tmp_path / "f.bin"
    save_field(fld, p)
    back = load_field(p)
    assert back.seed == 99 and back.window == fld.window
    assert np.array_equal(back.values, fld.values)
    p.write_bytes(b"XXXX" + p.read_bytes()[4:])
    with pytest.raises(ValueError):
        load_field(p)
    with pytest.raises(ValueError):
        EdgeField(Window(2), np.zeros(3))
