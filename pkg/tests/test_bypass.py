import numpy as np
import pytest

from oracles import king_neighbours
from percolab.bypass import (CrossingClusters, _longest_open_run, build_detour, constructive_distance_bound,
                             link_through_good_boxes, three_rv_sampler)
from percolab.experiments import planted_coupler
from percolab.lattice import Edge, edge_set
from percolab.percolation import Window, monotone_config, sample_uniform_field
from percolab.renorm import BoxStateCache, build_hierarchy
from percolab.shells import shells_for_path

PLANTED = [3, 19, 3]


def _open_grid(L):
    cfg = monotone_config(sample_uniform_field(Window(L), 0), 1.0, 1.0)
    return cfg.level("p")


def _is_open_path(grid, path):
    path = np.asarray(path)
    steps = np.abs(np.diff(path, axis=0)).sum(axis=1)
    return bool(np.all(steps == 1) and all(grid.edge_value(u, v) for u, v in zip(path[:-1], path[1:])))


def test_single_box_link_is_empty():
    h = build_hierarchy(3, [3])
    out = link_through_good_boxes({(0, 0)}, (0, 0), (0, 0), [], _open_grid(10), h)
    assert out.tolist() == [[0, 0]]


def test_adjacent_open_boxes():
    h = build_hierarchy(3, [3])
    grid = _open_grid(12)
    out = link_through_good_boxes({(0, 0), (1, 0)}, (0, 0), (3, 0), [(1, 0)], grid, h)
    assert tuple(out[0]) == (0, 0) and tuple(out[-1]) == (3, 0)
    assert _is_open_path(grid, out)
    assert (1, 0) not in {tuple(v) for v in out.tolist()}
    assert len(out) - 1 <= h.link_bound() * 2
    # joins are L1 geodesics between consecutive anchors; the anchor of box (1, 0) is (2, -1)
    assert len(out) - 1 == 3 + 2


@pytest.mark.parametrize("seed", range(100))
def test_random_good_box_corridors(seed):
    rng = np.random.default_rng(seed)
    h = build_hierarchy(4, [4], beta=1.0)
    cfg = monotone_config(sample_uniform_field(Window(48), 1000 + seed), 0.9, 0.95)
    view = cfg.masked()
    cache = BoxStateCache(view, h)
    lo, hi = cache.evaluable_bounds(1)

    def good(w):
        return bool(np.all((np.asarray(w) >= lo) & (np.asarray(w) <= hi))) and cache.is_good(1, w)

    starts = [s for s in king_neighbours((0, 0)) if good(s)]
    if not starts:
        pytest.skip("no good box near the origin in this sample")
    walk = [starts[rng.integers(len(starts))]]
    for _ in range(6):
        nxt = [w for w in king_neighbours(walk[-1]) if good(w)]
        if not nxt:
            break
        walk.append(nxt[rng.integers(len(nxt))])
    I = set(walk)
    clusters = CrossingClusters(view.p, h)
    start = tuple(clusters.vertices(walk[0])[0])
    end = tuple(clusters.vertices(walk[-1])[-1])
    far = [(-10 ** 4, -10 ** 4)]
    out = link_through_good_boxes(I, start, end, far, view.p, h, walk[0], walk[-1], clusters)
    assert tuple(out[0]) == start and tuple(out[-1]) == end
    assert _is_open_path(view.p, out)
    assert len(out) - 1 <= h.link_bound() * len(I)


def test_empty_E_returns_path():
    h = build_hierarchy(3, PLANTED, allow_decreasing=True)
    path = np.array([(x, 0) for x in range(5)])
    res = build_detour(path, [], None, None, h)
    assert np.array_equal(res.path, path) and res.added == set() and res.components == 0


@pytest.fixture(scope="module")
def planted_detour():
    h = build_hierarchy(3, PLANTED, beta=1.0, allow_decreasing=True)
    window = Window(900)
    path = np.array([(x, 0) for x in range(401)])
    cfg = planted_coupler(window, [((200, 0), 0)])(path)
    view = cfg.masked()
    fam = shells_for_path(path, BoxStateCache(view, h), h)
    e = Edge((200, 0), (201, 0))
    return h, path, cfg, fam, e, build_detour(path, [e], fam, view, h)


def test_planted_single_closure_detour(planted_detour):
    h, path, cfg, fam, e, res = planted_detour
    new = res.path
    assert tuple(new[0]) == (0, 0) and tuple(new[-1]) == (400, 0)
    assert e not in edge_set(new)
    assert _is_open_path(cfg.level("p"), new)
    assert len({tuple(v) for v in new.tolist()}) == len(new)
    assert len(res.added) <= 12 * h.beta * h.N1 * len(fam.shells[e].boxes)
    assert res.added == edge_set(new) - edge_set(path)
    assert res.components == 1 and len(res.trace) == 1


def test_detour_rejects_edges_without_shells(planted_detour):
    h, path, cfg, fam, e, _ = planted_detour
    with pytest.raises(ValueError):
        build_detour(path, [Edge((1, 0), (2, 0))], fam, cfg.masked(), h)


def test_planted_bound_report():
    h = build_hierarchy(3, PLANTED, beta=1.0, allow_decreasing=True)
    couple = planted_coupler(Window(900), [((150, 0), 0), ((260, 0), 0)])
    rows = []
    rep = constructive_distance_bound(couple, (400, 0), h, rows)
    assert rep.status == "ok" and rep.holds and rep.ledger_ok
    assert rep.n_closed == 2 and rep.n_avoided == 2
    assert rep.D_q == 400 and rep.D_p == 402
    assert rows and rows[0]["link_length"] > 0


def test_equal_levels_leave_nothing_to_bypass():
    h = build_hierarchy(8, beta=1.5)
    rep = constructive_distance_bound(three_rv_sampler(Window(60), 0.7, 0.7, 4), (30, 0), h)
    assert rep.status == "ok"
    assert rep.n_closed == 0 and rep.added == 0 and rep.stitch == 0
    assert rep.D_p == rep.D_q


def test_longest_open_run_prefers_earliest():
    grid = _open_grid(6)
    data = tuple(a.copy() for a in grid.data)
    data[0][2 + 6, 6] = False  # (2,0)-(3,0)
    g = Window(6).grid(data)
    path = np.array([(x, 0) for x in range(6)])
    # runs: [0,2] and [3,5], both two edges long
    assert _longest_open_run(g, path) == (0, 2)
