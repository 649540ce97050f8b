import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import components, ext_boundary, interior_of, king_neighbours, l1_neighbours
from percolab.lattice import (BoxSpec, Edge, as_path, box_bounds, box_sites, dist_to_boxes, edge_set,
                              enumerate_star_animals, exterior_boundary, half_open_range, interior,
                              is_lattice_path, l1_components, loop_erase, path_edges, site_of,
                              star_components)
from percolab.renorm import build_hierarchy

sites2 = st.sets(st.tuples(st.integers(-6, 6), st.integers(-6, 6)), min_size=1, max_size=40)


def test_edge_is_canonical_and_adjacent():
    e = Edge((1, 0), (0, 0))
    assert (e.a, e.b) == ((0, 0), (1, 0))
    assert e.axis == 0
    assert Edge.between([0, 2], [0, 1]) == Edge((0, 1), (0, 2))
    with pytest.raises(ValueError):
        Edge((0, 0), (1, 1))


@given(st.integers(1, 40))
def test_half_open_range_matches_definition(N):
    lo, hi = half_open_range(N)
    half = Fraction(N, 2)
    expected = [x for x in range(-N, N + 1) if -half <= x < half]
    assert list(range(lo, hi + 1)) == expected


@given(st.integers(-200, 200), st.integers(1, 30))
def test_site_of_inverts_box_membership(x, N):
    s = int(site_of(np.array([x]), N)[0])
    lo, hi = box_bounds(N, [s])
    assert lo[0] <= x <= hi[0]


def test_enlarged_box_is_three_boxes_wide():
    lo, hi = box_bounds(5, (1, -2), enlarged=True)
    assert (hi - lo + 1).tolist() == [15, 15]
    h = build_hierarchy(3, [3, 3], depth=2)
    assert len(box_sites(BoxSpec(1, (0, 0)), h)) == 9
    with pytest.raises(ValueError):
        box_sites(BoxSpec(3, (0, 0)), h)


@given(st.lists(st.tuples(st.integers(-20, 20), st.integers(-20, 20)), min_size=1, max_size=5),
       st.tuples(st.integers(-10, 10), st.integers(-10, 10)), st.integers(0, 6))
def test_dist_to_boxes_brute_force(points, corner, size):
    lo = np.array([corner])
    hi = lo + size
    got = dist_to_boxes(points, lo, hi)[:, 0]
    for p, g in zip(points, got):
        cells = itertools.product(range(corner[0], corner[0] + size + 1), range(corner[1], corner[1] + size + 1))
        assert g == min(abs(p[0] - c[0]) + abs(p[1] - c[1]) for c in cells)


@settings(max_examples=150)
@given(sites2)
def test_boundary_and_interior_match_flood_fill(S):
    assert exterior_boundary(S) == ext_boundary(S)
    assert interior(S) == interior_of(S)


@settings(max_examples=150)
@given(sites2)
def test_components_match_oracle(S):
    assert star_components(S) == components(S, king_neighbours)
    assert l1_components(S) == components(S, l1_neighbours)


def test_boundary_of_interior_closes_up():
    ring = {(x, y) for x in range(-3, 4) for y in range(-3, 4) if max(abs(x), abs(y)) == 3}
    inner = interior(ring)
    assert len(inner) == 25
    # the outer ring minus its corners is what L1 adjacency sees from outside
    assert exterior_boundary(inner) == {s for s in ring if min(abs(s[0]), abs(s[1])) < 3}


def test_animal_counts_oracle():
    # containing-the-origin counts are m times the fixed polyplet counts 1, 4, 20, 110
    assert [enumerate_star_animals(m) for m in (1, 2, 3, 4)] == [1, 8, 60, 440]
    with pytest.raises(ValueError):
        enumerate_star_animals(6)


def _brute_animals(m):
    box = [c for c in itertools.product(range(-m + 1, m), repeat=2) if c != (0, 0)]
    count = 0
    for rest in itertools.combinations(box, m - 1):
        S = {(0, 0), *rest}
        if len(components(S, king_neighbours)) == 1:
            count += 1
    return count


@pytest.mark.parametrize("m", [1, 2, 3])
def test_animal_counts_brute_force(m):
    assert enumerate_star_animals(m) == _brute_animals(m)


walks = st.lists(st.sampled_from([(1, 0), (-1, 0), (0, 1), (0, -1)]), min_size=0, max_size=60)


def _walk(steps):
    pts = [(0, 0)]
    for s in steps:
        pts.append((pts[-1][0] + s[0], pts[-1][1] + s[1]))
    return np.array(pts)


@given(walks)
def test_loop_erase_gives_simple_subpath(steps):
    path = _walk(steps)
    out = loop_erase(path)
    assert tuple(out[0]) == tuple(path[0]) and tuple(out[-1]) == tuple(path[-1])
    assert len({tuple(v) for v in out}) == len(out)
    assert is_lattice_path(out)
    assert edge_set(out) <= edge_set(path)
    assert len(out) <= len(path)


def test_path_helpers():
    path = as_path([(0, 0), (1, 0), (1, 1)])
    lower, axis = path_edges(path)
    assert lower.tolist() == [[0, 0], [1, 0]] and axis.tolist() == [0, 1]
    assert not is_lattice_path([(0, 0), (2, 0)])
    with pytest.raises(ValueError):
        as_path([1, 2, 3])
