import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from latgauge.lattice import (Geometry, LoopOutOfBounds, NotALoop, cubes_containing, cubes_in_slab,
                              make_loop, plaquette_loop, plaquette_readings, r_neighborhood, rect_loop,
                              share_cube, union_neighborhood, vertical_chain)

boxes = st.integers(2, 3).flatmap(
    lambda d: st.tuples(st.lists(st.integers(-2, 1), min_size=d, max_size=d),
                        st.lists(st.integers(1, 3), min_size=d, max_size=d)))


def _box(spec):
    lo, ext = spec
    return Geometry.box(tuple(lo), tuple(l + e for l, e in zip(lo, ext)))


def _n_edges(lo, hi):
    side = [h - l + 1 for l, h in zip(lo, hi)]
    return sum((side[a] - 1) * math.prod(side[:a] + side[a + 1:]) for a in range(len(side)))


@settings(max_examples=40, deadline=None)
@given(spec=boxes)
def test_edge_count_and_ids(spec):
    g = _box(spec)
    assert g.n_edges == _n_edges(g.lo, g.hi)
    for e in range(g.n_edges):
        assert g.edge_id(g.edge_base[e], int(g.edge_axis[e])) == e
    assert np.all(g.edge_tip - g.edge_base == np.eye(g.dim, dtype=int)[g.edge_axis])


@settings(max_examples=40, deadline=None)
@given(spec=boxes)
def test_plaquettes_are_closed_loops(spec):
    g = _box(spec)
    for p in range(g.n_plaquettes):
        es, ss = g.plaq_edges[p], g.plaq_signs[p]
        disp = sum(s * np.eye(g.dim, dtype=int)[g.edge_axis[e]] for e, s in zip(es, ss))
        assert not np.any(disp)
        make_loop(g, zip(es.tolist(), ss.tolist()))  # must not raise


@settings(max_examples=40, deadline=None)
@given(spec=boxes)
def test_incidence_is_consistent(spec):
    g = _box(spec)
    ptr, plaq, pos = g.incidence
    for e in range(g.n_edges):
        for p, k in zip(plaq[ptr[e]:ptr[e + 1]], pos[ptr[e]:ptr[e + 1]]):
            assert g.plaq_edges[p, k] == e
    assert g.max_plaquettes_per_edge <= 2 * (g.dim - 1)
    assert ptr[-1] == 4 * g.n_plaquettes


@settings(max_examples=30, deadline=None)
@given(spec=boxes)
def test_checkerboard_classes(spec):
    g = _box(spec)
    classes = g.checkerboard_classes()
    assert sorted(np.concatenate(classes).tolist()) == list(range(g.n_edges))
    for cls in classes:
        s = set(cls.tolist())
        for e in cls:
            for p in g.plaquettes_of(e):
                assert len(s.intersection(g.plaq_edges[p].tolist())) == 1


def test_boundary_definition():
    g = Geometry.box((0, 0), (2, 2))
    # an edge is on the boundary iff some other coordinate of its base is extremal
    for e in range(g.n_edges):
        b, a = g.edge_base[e], g.edge_axis[e]
        expect = any(b[j] in (g.lo[j], g.hi[j]) for j in range(2) if j != a)
        assert g.boundary_mask[e] == expect
    assert len(g.interior_edges) == 4


def test_slab_counts():
    s = Geometry.slab(2, 3, 1)
    assert len(s.interior_edges) == 16
    assert len(cubes_in_slab(s)) == 3
    thin = Geometry.slab(2, 2, 2, centered=False)
    assert thin.n_edges == 22
    assert thin.lo[0] == 0 and thin.hi[0] == 2
    assert len(vertical_chain(thin, [0])) == 2
    with pytest.raises(ValueError):
        Geometry.slab(2, 1, 2)
    with pytest.raises(ValueError):
        Geometry.slab(1, 2, 1)


def test_temporal_and_spatial_masks():
    s = Geometry.slab(3, 2, 1)
    tm, sm = s.temporal_mask, s.spatial_boundary_mask
    assert not np.any(tm & (s.edge_axis == 0))
    assert np.all(s.boundary_mask == (tm | sm))
    base = s.edge_base
    assert np.all(np.isin(base[tm, 0], [s.lo[0], s.hi[0]]))


def test_cubes_in_slab_strictly_inside():
    s = Geometry.slab(3, 3, 1)
    for lo, hi in cubes_in_slab(s):
        assert hi[0] - lo[0] == s.hi[0] - s.lo[0]
        for i in range(1, 3):
            assert s.lo[i] < lo[i] and hi[i] < s.hi[i]
        inner = set(s.subbox_interior_edges(lo, hi).tolist())
        assert not inner & set(s.boundary_edges.tolist())
    e = int(s.interior_edges[0])
    for c in cubes_containing(s, e):
        assert e in s.subbox_interior_edges(*c)


def test_subgeometry_mapping():
    g = Geometry.box((-2, -2), (2, 2))
    sub, mapping = g.subgeometry((-1, 0), (1, 2))
    assert sub.n_edges == len(mapping)
    assert sorted(mapping.tolist()) == sorted(g.subbox_edges((-1, 0), (1, 2)).tolist())
    assert np.all(np.diff(mapping[np.argsort(mapping)]) > 0)
    for i, e in enumerate(mapping):
        assert np.array_equal(sub.edge_base[i], g.edge_base[e])


def test_rect_loop_and_errors():
    g = Geometry.box((0, 0), (3, 3))
    lp = rect_loop(g, 2, 3)
    assert len(lp) == 10
    with pytest.raises(LoopOutOfBounds):
        rect_loop(g, 4, 1)
    with pytest.raises(ValueError):
        rect_loop(g, 1, 1, plane=(0, 0))
    with pytest.raises(NotALoop):
        make_loop(g, [(g.edge_id((0, 0), 0), 1), (g.edge_id((1, 0), 1), 1)])


def test_plaquette_readings_cover_the_plaquette():
    g = Geometry.box((0, 0, 0), (1, 1, 1))
    for p in range(g.n_plaquettes):
        rs = plaquette_readings(g, p)
        assert len(rs) == 8
        for r in rs:
            assert sorted(e for e, _ in r) == sorted(g.plaq_edges[p].tolist())
            make_loop(g, r)
        assert plaquette_loop(g, p).edges == tuple(g.plaq_edges[p].tolist())


def test_r_neighborhood_example():
    g = Geometry.cube(2, 4)
    e = g.edge_id((0, -4), 0)
    nb = r_neighborhood(g, e, 1)
    assert (nb.lo, nb.hi) == ((-2, -4), (2, 0))
    assert e in nb.edges
    with pytest.raises(ValueError):
        r_neighborhood(g, e, 0.3)
    with pytest.raises(ValueError):
        r_neighborhood(g, e, 3)
    with pytest.raises(ValueError):
        r_neighborhood(g, int(g.interior_edges[0]), 1)
    whole = r_neighborhood(g, e, 3, clamp=True)
    assert (whole.lo, whole.hi) == (g.lo, g.hi)
    corner = r_neighborhood(g, g.edge_id((-4, -4), 0), 1)
    assert (corner.lo, corner.hi) == ((-4, -4), (0, 0))


@pytest.mark.parametrize("d,N,r", [(2, 4, 1), (2, 8, 1), (2, 8, 2), (3, 4, 1)])
def test_neighborhood_structure_exhaustive(d, N, r):
    g = Geometry.cube(d, N)
    outer = set(g.boundary_edges.tolist())
    for e in g.boundary_edges.tolist():
        nb = r_neighborhood(g, e, r)
        inside = set(nb.edges.tolist())
        assert all(h - l == 4 * r for l, h in zip(nb.lo, nb.hi))
        assert all(-N <= a and b <= N for a, b in zip(nb.lo, nb.hi))
        assert e in set(nb.boundary.tolist())
        for p in g.plaquettes_of(e):
            assert set(g.plaq_edges[p].tolist()) <= inside
        for u in set(nb.boundary.tolist()) - outer:
            assert g.dist(e, u) > r


def test_union_of_far_neighborhoods_is_disjoint():
    g = Geometry.cube(2, 8)
    assert len(union_neighborhood(g, [], 1)) == 0
    e, f = g.edge_id((-8, -8), 0), g.edge_id((7, 8), 0)
    a, b = r_neighborhood(g, e, 1).edges, r_neighborhood(g, f, 1).edges
    assert not set(a.tolist()) & set(b.tolist())
    assert len(union_neighborhood(g, [e, f], 1)) == 2 * len(a)


@settings(max_examples=30, deadline=None)
@given(r2=st.integers(1, 2), pick=st.integers(0, 10**6))
def test_neighborhood_contains_edge_and_fits(r2, pick):
    g = Geometry.cube(2, 4)
    b = g.boundary_edges
    e = int(b[pick % len(b)])
    nb = r_neighborhood(g, e, r2 / 2)
    assert e in nb.edges
    assert all(h - l == 2 * r2 for l, h in zip(nb.lo, nb.hi))
    assert all(g.lo[i] <= nb.lo[i] and nb.hi[i] <= g.hi[i] for i in range(2))
    u = union_neighborhood(g, [e], r2 / 2)
    assert np.array_equal(u, np.sort(nb.edges))


def test_share_cube_and_distance():
    g = Geometry.box((0, 0), (4, 4))
    e, f = g.edge_id((0, 0), 0), g.edge_id((3, 0), 0)
    assert share_cube(g, e, f, 4)
    assert not share_cube(g, e, f, 3)
    assert g.dist(e, f) == pytest.approx(3.0)
    s = Geometry.slab(2, 3, 1)
    for e in s.interior_edges:
        assert s.dist_to_spatial_boundary(int(e)) > 0


def test_geometry_validation():
    with pytest.raises(ValueError):
        Geometry.box((0,), (1,))
    with pytest.raises(ValueError):
        Geometry.cube(2, 0)
    with pytest.raises(ValueError):
        Geometry.box((0, 0), (0, 2))


def test_edge_labels_unique():
    g = Geometry.box((0, 0, 0), (2, 1, 1))
    labels = [g.edge_label(e) for e in range(g.n_edges)]
    assert len(set(labels)) == len(labels)
    assert all(g.has_edge(g.edge_base[e], int(g.edge_axis[e])) for e in range(g.n_edges))
    assert not g.has_edge((5, 5, 5), 0)


def test_vertical_chain_spans_slab():
    s = Geometry.slab(3, 2, 2)
    ids = vertical_chain(s, [1, -1])
    assert len(ids) == s.hi[0] - s.lo[0]
    assert all(s.edge_axis[e] == 0 for e in ids)
    bases = [tuple(s.edge_base[e]) for e in ids]
    assert bases == [(t, 1, -1) for t in range(s.lo[0], s.hi[0])]
